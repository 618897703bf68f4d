//! TOML experiment configuration and the canonical `spec.echo` form.
//!
//! Sections: `[game]`, `[layout]`, `[train_env]`, `[test_env]`, `[agent]`,
//! `[protocol]`, `[noise]`, plus `[suite]` for paired runs and `[index]`,
//! which only the echo writes. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentConfig, Algorithm, EvalPolicy, Exploration};
use crate::games::{ElementPolicy, GameKind, LayoutSpec, PolicyKind};
use crate::harness::{manifest_targets, Counting, EnvDescriptor, ExperimentSpec, NoiseSettings, Protocol, SuitePair};
use crate::mdp::RewardSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<GameKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub food_reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub win_reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_velocity: Option<[i8; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_walls: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSection {
    #[serde(default)]
    pub support: Vec<EnvSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    Boltzmann,
    EpsilonGreedy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration: Option<ExplorationKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Desk,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_episodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_episodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_policy: Option<EvalPolicy>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_per_episode: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_support_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse_sample_k: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    /// Explicit targets on the configured layout; the source is `[train_env]`.
    #[serde(default)]
    pub targets: Vec<EnvSection>,
    /// Shipped layouts for a generated manifest.
    #[serde(default)]
    pub layouts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counting: Option<Counting>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub layout: LayoutSection,
    #[serde(default)]
    pub train_env: EnvSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_env: Option<EnvSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<IndexSection>,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteSection>,
    /// Directory used to resolve relative layout paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn layout(&self) -> Result<LayoutSpec, ConfigError> {
        let l = &self.layout;
        let given = [l.builtin.is_some(), l.path.is_some(), l.text.is_some()].iter().filter(|&&b| b).count();
        if given != 1 {
            return Err(invalid("layout", "exactly one of builtin, path or text is required"));
        }
        let layout = if let Some(name) = &l.builtin {
            LayoutSpec::builtin(name).map_err(|e| invalid("layout.builtin", e.to_string()))?
        } else if let Some(path) = &l.path {
            let full = match &self.base_dir {
                Some(d) if path.is_relative() => d.join(path),
                _ => path.clone(),
            };
            LayoutSpec::load(&full).map_err(|e| invalid("layout.path", e.to_string()))?
        } else {
            let name = l.name.clone().unwrap_or_else(|| "inline".to_string());
            LayoutSpec::parse(&name, l.text.as_deref().unwrap_or_default())
                .map_err(|e| invalid("layout.text", e.to_string()))?
        };
        Ok(layout)
    }

    pub fn kind(&self) -> Result<GameKind, ConfigError> {
        match (self.game.kind, &self.layout.builtin) {
            (Some(k), _) => Ok(k),
            (None, Some(b)) => GameKind::for_builtin(b).ok_or_else(|| invalid("game.kind", "cannot infer from layout")),
            (None, None) => Err(invalid("game.kind", "required unless layout.builtin names a shipped grid")),
        }
    }

    fn base_env(&self, kind: GameKind, layout: LayoutSpec) -> Result<EnvDescriptor, ConfigError> {
        let mut env = EnvDescriptor::new(kind, layout);
        let g = &self.game;
        let mut r = RewardSpec::default_for(kind);
        r.step_penalty = g.step_penalty.unwrap_or(r.step_penalty);
        r.food_reward = g.food_reward.unwrap_or(r.food_reward);
        r.death_penalty = g.death_penalty.unwrap_or(r.death_penalty);
        r.win_reward = g.win_reward.unwrap_or(r.win_reward);
        r.validate().map_err(|m| invalid("game", m))?;
        env.rewards = r;
        env.discount = g.discount.unwrap_or(env.discount);
        if !(env.discount > 0.0 && env.discount <= 1.0) {
            return Err(invalid("game.discount", format!("{} outside (0, 1]", env.discount)));
        }
        if let Some([vx, vy]) = g.ball_velocity {
            env.ball_velocity = (vx, vy);
        }
        Ok(env)
    }

    fn env(base: &EnvDescriptor, s: &EnvSection, key: &str) -> Result<EnvDescriptor, ConfigError> {
        let mut env = base.clone();
        if let Some(kind) = s.policy {
            let policy = ElementPolicy { kind, p: s.p.unwrap_or(0.0), near_walls: s.near_walls.unwrap_or(false) };
            if kind.uses_bias() && !(0.0..=1.0).contains(&policy.p) {
                return Err(invalid(&format!("{key}.p"), format!("{} outside [0, 1]", policy.p)));
            }
            env.policy = Some(policy.normalized());
        } else if s.p.is_some() || s.near_walls.is_some() {
            return Err(invalid(&format!("{key}.policy"), "p / near_walls given without a policy"));
        }
        if base.kind == GameKind::Breakout {
            env.policy = None;
        }
        env.noise_std = s.noise_std.unwrap_or(0.0);
        if !(env.noise_std.is_finite() && env.noise_std >= 0.0) {
            return Err(invalid(&format!("{key}.noise_std"), "must be finite and >= 0"));
        }
        env.game_spec().map_err(|e| invalid(key, e.to_string()))?;
        Ok(env)
    }

    pub fn agent(&self, game_discount: f64) -> Result<AgentConfig, ConfigError> {
        let a = &self.agent;
        let d = AgentConfig::default();
        let exploration = match a.exploration.unwrap_or(ExplorationKind::EpsilonGreedy) {
            ExplorationKind::EpsilonGreedy => {
                if a.temperature.is_some() {
                    return Err(invalid("agent.temperature", "only used with exploration = \"boltzmann\""));
                }
                Exploration::EpsilonGreedy { epsilon: a.epsilon.unwrap_or(0.1) }
            }
            ExplorationKind::Boltzmann => {
                if a.epsilon.is_some() {
                    return Err(invalid("agent.epsilon", "only used with exploration = \"epsilon_greedy\""));
                }
                Exploration::Boltzmann { temperature: a.temperature.unwrap_or(1.5) }
            }
        };
        let cfg = AgentConfig {
            algorithm: a.algorithm.unwrap_or(d.algorithm),
            exploration,
            alpha: a.alpha.unwrap_or(d.alpha),
            discount: a.discount.unwrap_or(game_discount),
            seed: a.seed.unwrap_or(0),
        };
        cfg.validate().map_err(|e| invalid("agent", e.to_string()))?;
        Ok(cfg)
    }

    pub fn protocol(&self) -> Result<Protocol, ConfigError> {
        let s = &self.protocol;
        let mut p = match s.scale.unwrap_or(Scale::Full) {
            Scale::Full => Protocol::full(),
            Scale::Desk => Protocol::desk(),
        };
        p.n_agents = s.n_agents.unwrap_or(p.n_agents);
        p.n_episodes = s.n_episodes.unwrap_or(p.n_episodes);
        p.eval_every = s.eval_every.unwrap_or(p.eval_every);
        p.eval_episodes = s.eval_episodes.unwrap_or(p.eval_episodes);
        p.max_steps = s.max_steps.unwrap_or(p.max_steps);
        p.base_seed = s.base_seed.unwrap_or(p.base_seed);
        p.eval_policy = s.eval_policy.unwrap_or(p.eval_policy);
        p.validate().map_err(|e| invalid("protocol", e.to_string()))?;
        Ok(p)
    }

    pub fn noise(&self) -> NoiseSettings {
        let d = NoiseSettings::default();
        let n = &self.noise;
        NoiseSettings {
            seed: n.seed.unwrap_or(d.seed),
            resample_per_episode: n.resample_per_episode.unwrap_or(d.resample_per_episode),
            dense_support_cap: n.dense_support_cap.unwrap_or(d.dense_support_cap),
            sparse_sample_k: n.sparse_sample_k.unwrap_or(d.sparse_sample_k),
        }
    }

    /// The single experiment described by the config (`run`).
    pub fn experiment(&self) -> Result<ExperimentSpec, ConfigError> {
        let base = self.base_env(self.kind()?, self.layout()?)?;
        let train_env = Self::env(&base, &self.train_env, "train_env")?;
        let test_env = match &self.test_env {
            Some(s) => Self::env(&base, s, "test_env")?,
            None => train_env.clone(),
        };
        let index_support = match &self.index {
            Some(ix) => ix
                .support
                .iter()
                .map(|s| Self::env(&base, s, "index.support"))
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let spec = ExperimentSpec {
            train_env,
            test_env,
            index_support,
            agent: self.agent(base.discount)?,
            protocol: self.protocol()?,
            noise: self.noise(),
        };
        spec.validate().map_err(|e| invalid("test_env", e.to_string()))?;
        Ok(spec)
    }

    /// Learnability / Generalization pairs (`suite`).
    pub fn suite_pairs(&self) -> Result<Vec<SuitePair>, ConfigError> {
        let suite = self.suite.as_ref().ok_or_else(|| invalid("suite", "section missing"))?;
        let protocol = self.protocol()?;
        let noise = self.noise();
        let mut pairs = Vec::new();
        if !suite.layouts.is_empty() {
            let names: Vec<&str> = suite.layouts.iter().map(String::as_str).collect();
            let targets = manifest_targets(&names, suite.counting.unwrap_or(Counting::Standard))
                .map_err(|e| invalid("suite.layouts", e.to_string()))?;
            for (source, target) in targets {
                let agent = self.agent(source.discount)?;
                pairs.push(
                    SuitePair::new(&source, &target, &agent, &protocol, &noise)
                        .map_err(|e| invalid("suite.layouts", e.to_string()))?,
                );
            }
        }
        if !suite.targets.is_empty() {
            let base = self.base_env(self.kind()?, self.layout()?)?;
            let source = Self::env(&base, &self.train_env, "train_env")?;
            let agent = self.agent(base.discount)?;
            for (i, t) in suite.targets.iter().enumerate() {
                let key = format!("suite.targets[{i}]");
                let target = Self::env(&base, t, &key)?;
                pairs.push(SuitePair::new(&source, &target, &agent, &protocol, &noise).map_err(|e| invalid(&key, e.to_string()))?);
            }
        }
        Ok(pairs)
    }
}

fn env_section(env: &EnvDescriptor) -> EnvSection {
    EnvSection {
        policy: env.policy.map(|p| p.kind),
        p: env.policy.filter(|p| p.kind.uses_bias()).map(|p| p.p),
        near_walls: env.policy.filter(|p| p.near_walls).map(|_| true),
        noise_std: Some(env.noise_std),
    }
}

/// Canonical TOML for `spec`; loading it reproduces the same spec.
pub fn echo_experiment(spec: &ExperimentSpec) -> String {
    let t = &spec.train_env;
    let r = t.rewards;
    let (exploration, epsilon, temperature) = match spec.agent.exploration {
        Exploration::EpsilonGreedy { epsilon } => (ExplorationKind::EpsilonGreedy, Some(epsilon), None),
        Exploration::Boltzmann { temperature } => (ExplorationKind::Boltzmann, None, Some(temperature)),
    };
    let p = &spec.protocol;
    let cfg = Config {
        game: GameSection {
            kind: Some(t.kind),
            discount: Some(t.discount),
            step_penalty: Some(r.step_penalty),
            food_reward: Some(r.food_reward),
            death_penalty: Some(r.death_penalty),
            win_reward: Some(r.win_reward),
            ball_velocity: Some([t.ball_velocity.0, t.ball_velocity.1]),
        },
        layout: LayoutSection {
            builtin: None,
            path: None,
            name: Some(t.layout.name.clone()),
            text: Some(t.layout.render()),
        },
        train_env: env_section(t),
        test_env: Some(env_section(&spec.test_env)),
        index: (!spec.index_support.is_empty())
            .then(|| IndexSection { support: spec.index_support.iter().map(env_section).collect() }),
        agent: AgentSection {
            algorithm: Some(spec.agent.algorithm),
            exploration: Some(exploration),
            epsilon,
            temperature,
            alpha: Some(spec.agent.alpha),
            discount: Some(spec.agent.discount),
            seed: Some(spec.agent.seed),
        },
        protocol: ProtocolSection {
            scale: None,
            n_agents: Some(p.n_agents),
            n_episodes: Some(p.n_episodes),
            eval_every: Some(p.eval_every),
            eval_episodes: Some(p.eval_episodes),
            max_steps: Some(p.max_steps),
            base_seed: Some(p.base_seed),
            eval_policy: Some(p.eval_policy),
        },
        noise: NoiseSection {
            seed: Some(spec.noise.seed),
            resample_per_episode: Some(spec.noise.resample_per_episode),
            dense_support_cap: Some(spec.noise.dense_support_cap),
            sparse_sample_k: Some(spec.noise.sparse_sample_k),
        },
        suite: None,
        base_dir: None,
    };
    toml::to_string(&cfg).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[layout]
builtin = "v2"

[train_env]
noise_std = 0.1
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let spec = Config::parse(MINIMAL).unwrap().experiment().unwrap();
        assert_eq!(spec.train_env.kind, GameKind::PacMan);
        assert_eq!(spec.train_env.noise_std, 0.1);
        assert_eq!(spec.test_env, spec.train_env);
        assert_eq!(spec.protocol, Protocol::full());
        assert_eq!(spec.agent.exploration, Exploration::EpsilonGreedy { epsilon: 0.1 });
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse("[agent]\nalpah = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("alpah"), "{err}");
        let err = Config::parse("[bogus]\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"
[layout]
builtin = "v3"
[train_env]
policy = "random_ghost"
[test_env]
policy = "teleporting_ghost"
p = 0.5
noise_std = 0.5
[agent]
algorithm = "q_learning"
exploration = "boltzmann"
[protocol]
scale = "desk"
base_seed = 9
"#;
        let spec = Config::parse(text).unwrap().experiment().unwrap();
        let echo = spec.echo();
        let again = Config::parse(&echo).unwrap().experiment().unwrap();
        assert_eq!(again, spec);
        assert_eq!(again.echo(), echo);
        assert_eq!(again.fingerprint(), spec.fingerprint());
    }

    #[test]
    fn mismatched_exploration_parameter_is_rejected() {
        let text = "[layout]\nbuiltin = \"v2\"\n[agent]\nexploration = \"boltzmann\"\nepsilon = 0.2\n";
        let err = Config::parse(text).unwrap().experiment().unwrap_err();
        assert!(err.to_string().contains("agent.epsilon"));
    }

    #[test]
    fn layout_must_be_unique() {
        let text = "[layout]\nbuiltin = \"v2\"\ntext = \"%%%\"\n";
        assert!(Config::parse(text).unwrap().experiment().is_err());
    }
}
