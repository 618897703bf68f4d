//! `indoor-lab` command line: build-mdp, inject-noise, run, suite, analyze.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure. On success
//! a single JSON line describing the outputs is printed to stdout.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{suite_report, write_report};
use crate::config::{Config, ConfigError};
use crate::harness::{
    build_mdps, read_run, run_experiment, run_suite, write_run, Execution, HarnessError, SuiteResult,
};
use crate::mdp::{validate_mdp, write_mdp, write_mdp_with_table};
use crate::noise::{inject_noise, table_distance};

pub const WORKERS_ENV: &str = "INDOOR_LAB_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "indoor-lab", version, about = "Tabular RL under transition noise and semantic game variants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides protocol.base_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to $INDOOR_LAB_WORKERS, then one per core.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "indoor-lab-out")]
    pub out_dir: PathBuf,
    /// Overrides protocol.n_agents.
    #[arg(long)]
    pub n_agents: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhichEnv {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate the configured game, validate it and export the MDP.
    BuildMdp {
        #[command(flatten)]
        common: Common,
    },
    /// Export one noise-injected table of the configured environment.
    InjectNoise {
        #[command(flatten)]
        common: Common,
        /// Noise std; defaults to the environment's noise_std.
        #[arg(long)]
        std: Option<f64>,
        #[arg(long, value_enum, default_value = "test")]
        env: WhichEnv,
    },
    /// Run one experiment and persist its results.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run every Learnability / Generalization pair of a suite and report.
    Suite {
        #[command(flatten)]
        common: Common,
    },
    /// Report on a persisted suite directory.
    Analyze {
        dir: PathBuf,
        /// Report directory; defaults to <dir>/report.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidSpec(_) | HarnessError::IncompatibleEnvironments(_) | HarnessError::Game(_) => {
                Failure::Validation(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn workers(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(w) = flag {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Validation(format!("{WORKERS_ENV}='{v}' is not a worker count"))),
        Err(_) => Ok(0),
    }
}

fn load(common: &Common) -> Result<Config, Failure> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.protocol.base_seed = Some(s);
    }
    if let Some(n) = common.n_agents {
        cfg.protocol.n_agents = Some(n);
    }
    Ok(cfg)
}

struct Log(bool);

impl Log {
    fn say(&self, msg: impl AsRef<str>) {
        if self.0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn cmd_build_mdp(common: &Common, log: &Log) -> Result<serde_json::Value, Failure> {
    let spec = load(common)?.experiment()?;
    let (train, _) = build_mdps(&spec)?;
    log.say(format!("{} states, {} pairs", train.state_count(), train.pair_count()));
    let report = validate_mdp(&train).structural();
    if !report.is_empty() {
        return Err(Failure::Runtime(format!("MDP failed validation:\n{report}")));
    }
    fs::create_dir_all(&common.out_dir).map_err(io(&common.out_dir))?;
    let path = common.out_dir.join("mdp.txt");
    let file = fs::File::create(&path).map_err(io(&path))?;
    write_mdp(&train, BufWriter::new(file)).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(json!({
        "command": "build-mdp",
        "status": "ok",
        "states": train.state_count(),
        "pairs": train.pair_count(),
        "entries": train.transitions().entry_count(),
        "output": path.display().to_string(),
    }))
}

fn cmd_inject_noise(common: &Common, std: Option<f64>, which: WhichEnv, log: &Log) -> Result<serde_json::Value, Failure> {
    let spec = load(common)?.experiment()?;
    let (train, test) = build_mdps(&spec)?;
    let (mdp, env) = match which {
        WhichEnv::Train => (train, &spec.train_env),
        WhichEnv::Test => (test, &spec.test_env),
    };
    let std = std.unwrap_or(env.noise_std);
    let noise = spec.noise.spec(std, spec.noise.seed ^ spec.protocol.base_seed);
    noise.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    let delta = inject_noise(Arc::clone(&mdp), noise).map_err(|e| Failure::Validation(e.to_string()))?;
    log.say(format!("{} states, approximate = {}", mdp.state_count(), delta.approximate));
    let report = validate_mdp(&delta.to_mdp()).structural();
    if !report.is_empty() {
        return Err(Failure::Runtime(format!("perturbed table failed validation:\n{report}")));
    }
    let distance =
        table_distance(mdp.transitions(), &delta.perturbed).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::create_dir_all(&common.out_dir).map_err(io(&common.out_dir))?;
    let path = common.out_dir.join("mdp_noisy.txt");
    let file = fs::File::create(&path).map_err(io(&path))?;
    write_mdp_with_table(&mdp, &delta.perturbed, BufWriter::new(file)).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(json!({
        "command": "inject-noise",
        "status": "ok",
        "std": std,
        "states": mdp.state_count(),
        "mean_tv_distance": distance,
        "approximate": delta.approximate,
        "degenerate_rows": delta.degenerate_rows,
        "output": path.display().to_string(),
    }))
}

fn cmd_run(common: &Common, log: &Log) -> Result<serde_json::Value, Failure> {
    let spec = load(common)?.experiment()?;
    let exec = Execution::from_workers(workers(common.workers)?);
    log.say(format!(
        "{} -> {}; {} agents x {} episodes ({exec:?})",
        spec.train_env.label(),
        spec.test_env.label(),
        spec.protocol.n_agents,
        spec.protocol.n_episodes
    ));
    let t0 = Instant::now();
    let result = run_experiment(&spec, exec)?;
    write_run(&common.out_dir, &spec, &result)?;
    let last = result.curve.last().expect("non-empty curve");
    Ok(json!({
        "command": "run",
        "status": "ok",
        "out_dir": common.out_dir.display().to_string(),
        "checkpoints": result.curve.len(),
        "final_mean_return": last.mean_return,
        "final_std_return": last.std_return,
        "fingerprint": result.spec_fingerprint,
        "seconds": t0.elapsed().as_secs_f64(),
    }))
}

fn report_into(suite: &SuiteResult, dir: &Path) -> Result<serde_json::Value, Failure> {
    let report = suite_report(suite);
    write_report(&report, suite, dir).map_err(io(dir))?;
    Ok(json!({
        "pairs": report.rows.len(),
        "failed": report.failures.len(),
        "sign_discrepancy": report.sign_discrepancy,
        "report": dir.display().to_string(),
    }))
}

fn cmd_suite(common: &Common, log: &Log) -> Result<serde_json::Value, Failure> {
    let pairs = load(common)?.suite_pairs()?;
    let exec = Execution::from_workers(workers(common.workers)?);
    log.say(format!("{} pair(s) ({exec:?})", pairs.len()));
    let t0 = Instant::now();
    let suite = run_suite(&pairs, exec, Some(&common.out_dir))?;
    for (id, e) in &suite.failures {
        log.say(format!("pair {id} failed: {e}"));
    }
    let report = report_into(&suite, &common.out_dir.join("report"))?;
    if !suite.failures.is_empty() {
        return Err(Failure::Runtime(format!("{} of {} pair(s) failed; see manifest.json", suite.failures.len(), pairs.len())));
    }
    Ok(json!({
        "command": "suite",
        "status": "ok",
        "out_dir": common.out_dir.display().to_string(),
        "report": report,
        "seconds": t0.elapsed().as_secs_f64(),
    }))
}

fn cmd_analyze(dir: &Path, out_dir: Option<&Path>) -> Result<serde_json::Value, Failure> {
    if dir.join("run.json").exists() {
        let run = read_run(dir)?;
        let last = run.result.curve.last().ok_or_else(|| Failure::Runtime("empty curve".into()))?;
        return Ok(json!({
            "command": "analyze",
            "status": "ok",
            "kind": "run",
            "checkpoints": run.result.curve.len(),
            "final_mean_return": last.mean_return,
            "auc": crate::analysis::auc(&run.result.curve),
            "visited_pairs": run.result.visited_union.count(),
            "pairs": run.result.pair_count(),
        }));
    }
    let suite = SuiteResult::load(dir)?;
    let target = out_dir.map_or_else(|| dir.join("report"), Path::to_path_buf);
    let report = report_into(&suite, &target)?;
    Ok(json!({ "command": "analyze", "status": "ok", "kind": "suite", "report": report }))
}

/// Runs the CLI and returns the process exit code.
pub fn main(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let log = Log(cli.verbose);
    let outcome = match &cli.command {
        Command::BuildMdp { common } => cmd_build_mdp(common, &log),
        Command::InjectNoise { common, std, env } => cmd_inject_noise(common, *std, *env, &log),
        Command::Run { common } => cmd_run(common, &log),
        Command::Suite { common } => cmd_suite(common, &log),
        Command::Analyze { dir, out_dir } => cmd_analyze(dir, out_dir.as_deref()),
    };
    match outcome {
        Ok(v) => {
            println!("{v}");
            0
        }
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}
