use std::sync::Arc;

use super::{EnvDescriptor, ExperimentSpec, HarnessError};
use crate::agents::{evaluate, run_training_episode, AgentError, Environment, NoisyEnv, QTable, TableEnv};
use crate::analysis::best_case_return;
use crate::bitset::PairSet;
use crate::games::Action;
use crate::mdp::{enumerate_states_joint, Mdp, DEFAULT_STATE_CAP};
use crate::noise::NoiseSpec;
use crate::seed::{derive, rng_from, Stream};

/// How agent runs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon pool with the given worker count; 0 means one per core.
    Parallel { workers: usize },
}

impl Execution {
    /// Parallel when the `parallel` feature is compiled in, else sequential.
    pub fn from_workers(workers: usize) -> Self {
        if cfg!(feature = "parallel") && workers != 1 {
            Execution::Parallel { workers }
        } else {
            Execution::Sequential
        }
    }
}

impl Default for Execution {
    fn default() -> Self {
        Self::from_workers(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Training episodes completed before this evaluation.
    pub episode: usize,
    pub mean_return: f64,
    /// Population standard deviation (ddof = 0).
    pub std_return: f64,
    pub n_agents: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalReturn {
    pub agent_index: usize,
    pub seed: u64,
    pub final_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub curve: Vec<CurvePoint>,
    pub per_agent_final: Vec<FinalReturn>,
    /// `per_agent_curves[i][k]`: mean test return of agent i at checkpoint k.
    pub per_agent_curves: Vec<Vec<f64>>,
    pub per_agent_visited: Vec<PairSet>,
    pub visited_union: PairSet,
    pub spec_fingerprint: String,
    pub state_count: usize,
    pub action_set: Vec<Action>,
    /// Legal-action bitmask per state, bit i for `action_set[i]`.
    pub legal_masks: Vec<u8>,
    /// Optimistic undiscounted return of the noise-free test environment.
    pub best_case_return: f64,
}

impl RunResult {
    pub fn pair_count(&self) -> usize {
        self.visited_union.capacity()
    }

    pub fn final_returns(&self) -> Vec<f64> {
        self.per_agent_final.iter().map(|f| f.final_return).collect()
    }
}

struct AgentOutcome {
    curve: Vec<f64>,
    visited: PairSet,
}

/// Seed of agent `i`.
pub(crate) fn agent_seed(spec: &ExperimentSpec, i: usize) -> u64 {
    derive(&[spec.protocol.base_seed, spec.agent.seed, i as u64])
}

enum AnyEnv {
    Table(TableEnv),
    Noisy(NoisyEnv),
}

impl Environment for AnyEnv {
    fn mdp(&self) -> &Mdp {
        match self {
            AnyEnv::Table(e) => e.mdp(),
            AnyEnv::Noisy(e) => e.mdp(),
        }
    }

    fn reset(&mut self) -> u32 {
        match self {
            AnyEnv::Table(e) => e.reset(),
            AnyEnv::Noisy(e) => e.reset(),
        }
    }

    fn step(&mut self, state: u32, action: Action) -> Result<crate::agents::Step, AgentError> {
        match self {
            AnyEnv::Table(e) => e.step(state, action),
            AnyEnv::Noisy(e) => e.step(state, action),
        }
    }
}

fn make_env(mdp: &Arc<Mdp>, noise: NoiseSpec, sample_seed: u64) -> Result<AnyEnv, AgentError> {
    if noise.is_zero() {
        Ok(AnyEnv::Table(TableEnv::new(mdp.clone(), sample_seed)))
    } else {
        Ok(AnyEnv::Noisy(NoisyEnv::new(mdp.clone(), noise, sample_seed)?))
    }
}

fn run_agent(
    spec: &ExperimentSpec,
    train_mdp: &Arc<Mdp>,
    test_mdp: &Arc<Mdp>,
    i: usize,
) -> Result<AgentOutcome, HarnessError> {
    let seed = agent_seed(spec, i);
    let fail = |source| HarnessError::WorkerFailure { agent: i, seed, source };
    let p = &spec.protocol;
    let ns = spec.noise.seed;
    let train_noise = spec.noise.spec(spec.train_env.noise_std, derive(&[seed, ns, Stream::TrainEnv as u64]));
    let test_noise = spec.noise.spec(spec.test_env.noise_std, derive(&[seed, ns, Stream::EvalEnv as u64]));
    let mut train = make_env(train_mdp, train_noise, derive(&[seed, Stream::TrainEnv as u64, 1])).map_err(fail)?;
    let mut test = make_env(test_mdp, test_noise, derive(&[seed, Stream::EvalEnv as u64, 1])).map_err(fail)?;
    let mut policy_rng = rng_from(derive(&[seed, Stream::AgentPolicy as u64]));
    let mut eval_rng = rng_from(derive(&[seed, Stream::EvalPolicy as u64]));

    let mut q = QTable::new(train_mdp);
    let mut curve = Vec::with_capacity(p.checkpoints());
    for _ in 0..p.checkpoints() {
        for _ in 0..p.eval_every {
            run_training_episode(&mut train, &mut q, &spec.agent, p.max_steps, &mut policy_rng).map_err(fail)?;
        }
        let r = evaluate(&mut test, &q, &spec.agent, p.eval_policy, p.eval_episodes, p.max_steps, &mut eval_rng)
            .map_err(fail)?;
        curve.push(r);
    }
    Ok(AgentOutcome { curve, visited: q.visited })
}

#[cfg(feature = "parallel")]
fn map_agents<F>(n: usize, exec: Execution, f: F) -> Result<Vec<Result<AgentOutcome, HarnessError>>, HarnessError>
where
    F: Fn(usize) -> Result<AgentOutcome, HarnessError> + Send + Sync,
{
    use rayon::prelude::*;
    match exec {
        Execution::Sequential => Ok((0..n).map(f).collect()),
        Execution::Parallel { workers } => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| HarnessError::Pool(e.to_string()))?;
            Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_agents<F>(n: usize, _exec: Execution, f: F) -> Result<Vec<Result<AgentOutcome, HarnessError>>, HarnessError>
where
    F: Fn(usize) -> Result<AgentOutcome, HarnessError>,
{
    Ok((0..n).map(f).collect())
}

/// Builds the train and test MDPs of `spec` over one shared state index.
pub fn build_mdps(spec: &ExperimentSpec) -> Result<(Arc<Mdp>, Arc<Mdp>), HarnessError> {
    let games = spec.index_games()?;
    let refs: Vec<_> = games.iter().collect();
    let index = Arc::new(enumerate_states_joint(&refs, DEFAULT_STATE_CAP)?);
    let build = |env: &EnvDescriptor| -> Result<Arc<Mdp>, HarnessError> {
        Ok(Arc::new(Mdp::assemble(&env.game_spec()?, index.clone())?))
    };
    let train = build(&spec.train_env)?;
    let test = if spec.test_env.same_dynamics(&spec.train_env) { train.clone() } else { build(&spec.test_env)? };
    Ok((train, test))
}

/// Runs every agent of `spec` and aggregates the evaluation curve.
pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<RunResult, HarnessError> {
    spec.validate()?;
    let (train_mdp, test_mdp) = build_mdps(spec)?;
    let n = spec.protocol.n_agents;
    let outcomes = map_agents(n, exec, |i| run_agent(spec, &train_mdp, &test_mdp, i))?;
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let k = spec.protocol.checkpoints();
    let curve = (0..k)
        .map(|c| {
            let mean = outcomes.iter().map(|o| o.curve[c]).sum::<f64>() / n as f64;
            let var = outcomes.iter().map(|o| (o.curve[c] - mean).powi(2)).sum::<f64>() / n as f64;
            CurvePoint {
                episode: (c + 1) * spec.protocol.eval_every,
                mean_return: mean,
                std_return: var.sqrt(),
                n_agents: n,
            }
        })
        .collect();
    let per_agent_final = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| FinalReturn { agent_index: i, seed: agent_seed(spec, i), final_return: o.curve[k - 1] })
        .collect();
    let mut visited_union = PairSet::new(train_mdp.pair_count());
    for o in &outcomes {
        visited_union.union_with(&o.visited);
    }
    let action_set = train_mdp.action_set().to_vec();
    let legal_masks = (0..train_mdp.state_count() as u32)
        .map(|s| {
            train_mdp.legal_actions(s).iter().fold(0u8, |m, a| {
                m | 1 << action_set.iter().position(|b| b == a).unwrap_or(0)
            })
        })
        .collect();
    let (per_agent_curves, per_agent_visited) = outcomes.into_iter().map(|o| (o.curve, o.visited)).unzip();
    Ok(RunResult {
        curve,
        per_agent_final,
        per_agent_curves,
        per_agent_visited,
        visited_union,
        spec_fingerprint: spec.fingerprint(),
        state_count: train_mdp.state_count(),
        action_set,
        legal_masks,
        best_case_return: best_case_return(&test_mdp),
    })
}
