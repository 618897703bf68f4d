//! Experiment orchestration: Learnability / Generalization agent populations,
//! scheduled evaluations, suites and persisted results.
//!
//! A Learnability run trains and tests on the same target environment; a
//! Generalization run trains on a source environment (typically noise-free)
//! and is tested zero-shot on the target. Agent runs are independent and are
//! mapped in parallel when the `parallel` feature is enabled; every agent
//! owns its random streams, so results do not depend on the worker count.

mod persist;
mod run;
mod suite;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use persist::{read_run, write_run, LoadedRun, RunMeta};
pub use run::{build_mdps, run_experiment, CurvePoint, Execution, FinalReturn, RunResult};
pub use suite::{
    manifest_targets, run_suite, Counting, NOISE_LEVELS, ManifestEntry, PairRecord, SuiteManifest, SuitePair, SuiteResult,
};

use crate::agents::{AgentConfig, AgentError, EvalPolicy, DEFAULT_MAX_STEPS};
use crate::games::{ElementPolicy, GameError, GameKind, GameSpec, LayoutSpec};
use crate::mdp::{MdpError, RewardSpec};
use crate::noise::NoiseSpec;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("environments do not share a state index: {0}")]
    IncompatibleEnvironments(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("agent {agent} (seed {seed}) failed: {source}")]
    WorkerFailure {
        agent: usize,
        seed: u64,
        #[source]
        source: AgentError,
    },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Corrupt { path: String, msg: String },
}

/// One environment: game, grid, element policy and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDescriptor {
    pub kind: GameKind,
    pub layout: Arc<LayoutSpec>,
    /// Policy of every stochastic element; `None` for Breakout.
    pub policy: Option<ElementPolicy>,
    pub noise_std: f64,
    pub rewards: RewardSpec,
    pub discount: f64,
    pub ball_velocity: (i8, i8),
}

impl EnvDescriptor {
    /// Noise-free environment with the default element policy and rewards of `kind`.
    pub fn new(kind: GameKind, layout: LayoutSpec) -> Self {
        let policy = match kind {
            GameKind::PacMan => Some(ElementPolicy::random_ghost()),
            GameKind::Pong => Some(ElementPolicy::random_paddle()),
            GameKind::Breakout => None,
        };
        Self {
            kind,
            layout: Arc::new(layout),
            policy,
            noise_std: 0.0,
            rewards: RewardSpec::default_for(kind),
            discount: 0.9,
            ball_velocity: (1, -1),
        }
    }

    pub fn builtin(name: &str) -> Result<Self, HarnessError> {
        let kind = GameKind::for_builtin(name)
            .ok_or_else(|| HarnessError::InvalidSpec(format!("cannot infer game for layout '{name}'")))?;
        Ok(Self::new(kind, LayoutSpec::builtin(name)?))
    }

    pub fn with_policy(mut self, policy: ElementPolicy) -> Self {
        self.policy = Some(policy.normalized());
        self
    }

    pub fn with_noise(mut self, std: f64) -> Self {
        self.noise_std = std;
        self
    }

    pub fn game_spec(&self) -> Result<GameSpec, GameError> {
        GameSpec::with_uniform_policy(
            self.kind,
            (*self.layout).clone(),
            self.policy.map(ElementPolicy::normalized),
            self.rewards,
            self.discount,
        )?
        .with_ball_velocity(self.ball_velocity.0, self.ball_velocity.1)
    }

    /// Same dynamics, ignoring noise.
    pub fn same_dynamics(&self, other: &EnvDescriptor) -> bool {
        self.policy.map(ElementPolicy::normalized) == other.policy.map(ElementPolicy::normalized)
            && self.compatible(other).is_ok()
    }

    /// Checks that both environments share a state index.
    pub fn compatible(&self, other: &EnvDescriptor) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::IncompatibleEnvironments(m));
        if self.kind != other.kind {
            return fail(format!("{} vs {}", self.kind.name(), other.kind.name()));
        }
        if !self.layout.same_grid(&other.layout) {
            return fail(format!("layouts '{}' and '{}' differ", self.layout.name, other.layout.name));
        }
        if self.rewards != other.rewards || self.discount != other.discount {
            return fail("reward constants or discount differ".into());
        }
        if self.ball_velocity != other.ball_velocity {
            return fail("initial ball velocities differ".into());
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let policy = self.policy.map_or_else(|| "NoElement".to_string(), |p| p.label());
        format!("{}/{}/std={}", self.layout.name, policy, self.noise_std)
    }
}

/// Noise parameters shared by all environments of an experiment; each
/// environment supplies its own std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub seed: u64,
    pub resample_per_episode: bool,
    pub dense_support_cap: usize,
    pub sparse_sample_k: usize,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        let n = NoiseSpec::default();
        Self {
            seed: n.seed,
            resample_per_episode: n.resample_per_episode,
            dense_support_cap: n.dense_support_cap,
            sparse_sample_k: n.sparse_sample_k,
        }
    }
}

impl NoiseSettings {
    pub fn spec(&self, std: f64, seed: u64) -> NoiseSpec {
        NoiseSpec {
            std,
            seed,
            resample_per_episode: self.resample_per_episode,
            dense_support_cap: self.dense_support_cap,
            sparse_sample_k: self.sparse_sample_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub n_agents: usize,
    pub n_episodes: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub max_steps: usize,
    pub base_seed: u64,
    pub eval_policy: EvalPolicy,
}

impl Protocol {
    /// 500 agents, 1000 training episodes, 10 test episodes every 10.
    pub fn full() -> Self {
        Self {
            n_agents: 500,
            n_episodes: 1_000,
            eval_every: 10,
            eval_episodes: 10,
            max_steps: DEFAULT_MAX_STEPS,
            base_seed: 0,
            eval_policy: EvalPolicy::Greedy,
        }
    }

    /// 50 agents, 300 training episodes.
    pub fn desk() -> Self {
        Self { n_agents: 50, n_episodes: 300, ..Self::full() }
    }

    pub fn checkpoints(&self) -> usize {
        self.n_episodes / self.eval_every
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidSpec(m.to_string()));
        if self.n_agents == 0 {
            return bad("n_agents must be at least 1");
        }
        if self.eval_every == 0 || self.n_episodes == 0 {
            return bad("n_episodes and eval_every must be positive");
        }
        if !self.n_episodes.is_multiple_of(self.eval_every) {
            return bad("eval_every must divide n_episodes");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub train_env: EnvDescriptor,
    pub test_env: EnvDescriptor,
    /// Further environments whose dynamics contribute to the state index, so
    /// paired runs share one (state, action) universe.
    pub index_support: Vec<EnvDescriptor>,
    pub agent: AgentConfig,
    pub protocol: Protocol,
    pub noise: NoiseSettings,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.protocol.validate()?;
        self.agent.validate().map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
        for env in std::iter::once(&self.test_env).chain(&self.index_support) {
            self.train_env.compatible(env)?;
        }
        for env in self.all_envs() {
            if !env.noise_std.is_finite() || env.noise_std < 0.0 {
                return Err(HarnessError::InvalidSpec(format!("noise std {} must be >= 0", env.noise_std)));
            }
            env.game_spec()?;
        }
        Ok(())
    }

    fn all_envs(&self) -> impl Iterator<Item = &EnvDescriptor> {
        [&self.train_env, &self.test_env].into_iter().chain(&self.index_support)
    }

    /// Distinct dynamics spanning the state index, in canonical order.
    pub fn index_games(&self) -> Result<Vec<GameSpec>, HarnessError> {
        let mut envs: Vec<&EnvDescriptor> = Vec::new();
        for env in self.all_envs() {
            if !envs.iter().any(|e| e.same_dynamics(env)) {
                envs.push(env);
            }
        }
        let mut keyed: Vec<(String, GameSpec)> = envs
            .into_iter()
            .map(|e| Ok((e.policy.map_or_else(String::new, |p| p.label()), e.game_spec()?)))
            .collect::<Result<_, HarnessError>>()?;
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(keyed.into_iter().map(|(_, g)| g).collect())
    }

    /// Canonical configuration text (the `spec.echo` file).
    pub fn echo(&self) -> String {
        crate::config::echo_experiment(self)
    }

    /// Hex SHA-256 of [`ExperimentSpec::echo`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Learnability spec: train and test on `target`.
pub fn make_learnability_spec(
    target: &EnvDescriptor,
    agent: &AgentConfig,
    protocol: &Protocol,
    noise: &NoiseSettings,
) -> ExperimentSpec {
    ExperimentSpec {
        train_env: target.clone(),
        test_env: target.clone(),
        index_support: Vec::new(),
        agent: agent.clone(),
        protocol: *protocol,
        noise: *noise,
    }
}

/// Generalization spec: train on `source`, test on `target`.
pub fn make_generalization_spec(
    source: &EnvDescriptor,
    target: &EnvDescriptor,
    agent: &AgentConfig,
    protocol: &Protocol,
    noise: &NoiseSettings,
) -> Result<ExperimentSpec, HarnessError> {
    source.compatible(target)?;
    Ok(ExperimentSpec {
        train_env: source.clone(),
        test_env: target.clone(),
        index_support: Vec::new(),
        agent: agent.clone(),
        protocol: *protocol,
        noise: *noise,
    })
}

#[cfg(test)]
mod tests;
