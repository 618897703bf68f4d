use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    make_generalization_spec, make_learnability_spec, read_run, run_experiment, write_run, EnvDescriptor, Execution,
    ExperimentSpec, HarnessError, NoiseSettings, Protocol, RunResult,
};
use crate::agents::AgentConfig;
use crate::games::{ElementPolicy, GameKind};

/// How the layout x element x noise manifest is enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counting {
    /// 33 PacMan + 18 Pong + 9 Breakout = 60 targets. PacMan RandomGhost is
    /// crossed with all three noise levels; each other ghost setting appears
    /// without noise and with low noise.
    Standard,
    /// Every element setting crossed with every noise level (45 + 18 + 9).
    Cross,
}

pub const NOISE_LEVELS: [f64; 3] = [0.0, 0.1, 0.5];

fn element_settings(kind: GameKind) -> Vec<Option<ElementPolicy>> {
    match kind {
        GameKind::PacMan => vec![
            Some(ElementPolicy::random_ghost()),
            Some(ElementPolicy::directional_ghost(0.3)),
            Some(ElementPolicy::directional_ghost(0.6)),
            Some(ElementPolicy::teleporting_ghost(0.5)),
            Some(ElementPolicy::teleporting_ghost(0.2)),
        ],
        GameKind::Pong => vec![
            Some(ElementPolicy::random_paddle()),
            Some(ElementPolicy::following_paddle(0.3)),
            Some(ElementPolicy::following_paddle(0.6)),
        ],
        GameKind::Breakout => vec![None],
    }
}

/// Target environments for the given layouts. The source of each target is
/// the same layout with the default element and no noise.
pub fn manifest_targets(layouts: &[&str], counting: Counting) -> Result<Vec<(EnvDescriptor, EnvDescriptor)>, HarnessError> {
    let mut out = Vec::new();
    for name in layouts {
        let source = EnvDescriptor::builtin(name)?;
        for (k, policy) in element_settings(source.kind).into_iter().enumerate() {
            for &std in &NOISE_LEVELS {
                let keep = match counting {
                    Counting::Cross => true,
                    Counting::Standard => source.kind != GameKind::PacMan || k == 0 || std < 0.5,
                };
                if keep {
                    let mut target = source.clone().with_noise(std);
                    target.policy = policy.map(ElementPolicy::normalized);
                    out.push((source.clone(), target));
                }
            }
        }
    }
    Ok(out)
}

/// One Learnability / Generalization comparison on a shared target.
#[derive(Debug, Clone, PartialEq)]
pub struct SuitePair {
    pub id: String,
    pub learnability: ExperimentSpec,
    pub generalization: ExperimentSpec,
}

fn slug(env: &EnvDescriptor) -> String {
    let policy = env.policy.map_or_else(|| "none".to_string(), |p| {
        let mut s = format!("{:?}", p.kind).to_lowercase();
        if p.kind.uses_bias() {
            s.push_str(&format!("{}", p.p));
        }
        if p.near_walls {
            s.push('w');
        }
        s
    });
    format!("{}_{}_s{}", env.layout.name, policy, env.noise_std)
}

impl SuitePair {
    pub fn new(
        source: &EnvDescriptor,
        target: &EnvDescriptor,
        agent: &AgentConfig,
        protocol: &Protocol,
        noise: &NoiseSettings,
    ) -> Result<Self, HarnessError> {
        let generalization = make_generalization_spec(source, target, agent, protocol, noise)?;
        let mut learnability = make_learnability_spec(target, agent, protocol, noise);
        learnability.index_support.push(source.clone());
        let mut generalization = generalization;
        generalization.index_support.push(target.clone());
        Ok(Self { id: slug(target), learnability, generalization })
    }

    pub fn target(&self) -> &EnvDescriptor {
        &self.learnability.test_env
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub id: String,
    pub target_label: String,
    pub learnability: RunResult,
    pub generalization: RunResult,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteResult {
    pub records: Vec<PairRecord>,
    /// (pair id, error message) of pairs that did not complete.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub target: String,
    pub learnability_dir: Option<String>,
    pub generalization_dir: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SuiteManifest {
    pub pairs: Vec<ManifestEntry>,
}

fn run_pair(pair: &SuitePair, exec: Execution, dir: Option<&Path>) -> Result<PairRecord, HarnessError> {
    if pair.learnability.test_env != pair.generalization.test_env {
        return Err(HarnessError::InvalidSpec("pair runs have different test environments".into()));
    }
    let mut out = Vec::with_capacity(2);
    for (spec, sub) in [(&pair.learnability, "learnability"), (&pair.generalization, "generalization")] {
        let mut r = run_experiment(spec, exec)?;
        if let Some(d) = dir {
            write_run(&d.join(&pair.id).join(sub), spec, &r)?;
            // Per-agent sets are on disk; keep the suite's memory flat.
            r.per_agent_visited.clear();
        }
        out.push(r);
    }
    let generalization = out.pop().expect("two runs");
    let learnability = out.pop().expect("two runs");
    Ok(PairRecord { id: pair.id.clone(), target_label: pair.target().label(), learnability, generalization })
}

/// Runs every pair; failed pairs are reported and the rest still persisted.
/// With `out_dir`, each pair is written to `<out_dir>/<id>/{learnability,generalization}`
/// and indexed in `<out_dir>/manifest.json`.
pub fn run_suite(pairs: &[SuitePair], exec: Execution, out_dir: Option<&Path>) -> Result<SuiteResult, HarnessError> {
    let mut result = SuiteResult::default();
    let mut manifest = SuiteManifest::default();
    for pair in pairs {
        let entry = match run_pair(pair, exec, out_dir) {
            Ok(rec) => {
                result.records.push(rec);
                ManifestEntry {
                    id: pair.id.clone(),
                    target: pair.target().label(),
                    learnability_dir: Some(format!("{}/learnability", pair.id)),
                    generalization_dir: Some(format!("{}/generalization", pair.id)),
                    error: None,
                }
            }
            Err(e) => {
                result.failures.push((pair.id.clone(), e.to_string()));
                ManifestEntry {
                    id: pair.id.clone(),
                    target: pair.target().label(),
                    learnability_dir: None,
                    generalization_dir: None,
                    error: Some(e.to_string()),
                }
            }
        };
        manifest.pairs.push(entry);
    }
    if let Some(d) = out_dir {
        fs::create_dir_all(d).map_err(|source| HarnessError::Io { path: d.display().to_string(), source })?;
        let path = d.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    }
    Ok(result)
}

impl SuiteResult {
    /// Loads a suite persisted by [`run_suite`].
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        let manifest: SuiteManifest = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Corrupt { path: path.display().to_string(), msg: e.to_string() })?;
        let mut out = SuiteResult::default();
        for e in manifest.pairs {
            match (&e.learnability_dir, &e.generalization_dir) {
                (Some(l), Some(g)) => {
                    let l: PathBuf = dir.join(l);
                    let g: PathBuf = dir.join(g);
                    out.records.push(PairRecord {
                        id: e.id,
                        target_label: e.target,
                        learnability: read_run(&l)?.result,
                        generalization: read_run(&g)?.result,
                    });
                }
                _ => out.failures.push((e.id, e.error.unwrap_or_default())),
            }
        }
        Ok(out)
    }
}
