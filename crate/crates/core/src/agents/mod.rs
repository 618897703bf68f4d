//! Tabular Q-learning and SARSA with Boltzmann or epsilon-greedy exploration.

mod env;
mod rollout;

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub use env::{Environment, NoisyEnv, Step, TableEnv};
pub use rollout::{evaluate, run_training_episode, EvalPolicy, DEFAULT_MAX_STEPS};

use crate::bitset::PairSet;
use crate::games::Action;
use crate::mdp::Mdp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("action {action:?} is not legal in state {state}")]
    IllegalAction { state: u32, action: Action },
    #[error("environment returned successor {successor} outside the state index (from state {state})")]
    EnvironmentFault { state: u32, successor: u32 },
    #[error("environment table is not aligned with the MDP's state-action pairs")]
    MisalignedTable,
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QLearning,
    Sarsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    Boltzmann { temperature: f64 },
    EpsilonGreedy { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub exploration: Exploration,
    pub alpha: f64,
    pub discount: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    /// SARSA, epsilon = 0.1, alpha = 0.05, discount = 0.9.
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sarsa,
            exploration: Exploration::EpsilonGreedy { epsilon: 0.1 },
            alpha: 0.05,
            discount: 0.9,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount {} outside (0, 1]", self.discount));
        }
        match self.exploration {
            Exploration::Boltzmann { temperature } if !(temperature > 0.0 && temperature.is_finite()) => {
                bad(format!("temperature {temperature} must be positive"))
            }
            Exploration::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                bad(format!("epsilon {epsilon} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// Action values indexed by the MDP's pair enumeration, plus the set of
/// pairs selected during training.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    pub visited: PairSet,
}

impl QTable {
    /// All-zero table for `mdp`.
    pub fn new(mdp: &Mdp) -> Self {
        Self {
            values: vec![0.0; mdp.pair_count()],
            visited: PairSet::new(mdp.pair_count()),
        }
    }

    #[inline]
    pub fn get(&self, pair: usize) -> f64 {
        self.values[pair]
    }

    #[inline]
    pub fn set(&mut self, pair: usize, v: f64) {
        self.values[pair] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, mdp: &Mdp, state: u32, action: Action) -> Option<f64> {
        mdp.pair(state, action).map(|p| self.values[p])
    }

    /// max_a Q(state, a) over legal actions; 0 for terminal states.
    pub fn max_value(&self, mdp: &Mdp, state: u32) -> f64 {
        let r = mdp.pair_range(state);
        if r.is_empty() {
            return 0.0;
        }
        self.values[r].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// One line per pair: `state action value`.
    pub fn write_to(&self, mdp: &Mdp, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "state action value")?;
        for (p, v) in self.values.iter().enumerate() {
            let (s, a) = mdp.pair_key(p);
            writeln!(w, "{s} {} {v}", a.symbol())?;
        }
        Ok(())
    }
}

fn legal_pair(mdp: &Mdp, s: u32, a: Action) -> Result<usize, AgentError> {
    mdp.pair(s, a).ok_or(AgentError::IllegalAction { state: s, action: a })
}

/// Q(s,a) += alpha * (r + discount * max_a' Q(s',a') - Q(s,a)); the bootstrap is
/// zero when `s_next` is terminal.
pub fn q_update(
    q: &mut QTable,
    mdp: &Mdp,
    s: u32,
    a: Action,
    r: f64,
    s_next: u32,
    cfg: &AgentConfig,
) -> Result<(), AgentError> {
    let pair = legal_pair(mdp, s, a)?;
    let bootstrap = if mdp.is_terminal(s_next) { 0.0 } else { q.max_value(mdp, s_next) };
    let old = q.values[pair];
    q.values[pair] = old + cfg.alpha * (r + cfg.discount * bootstrap - old);
    Ok(())
}

/// Q(s,a) += alpha * (r + discount * Q(s',a') - Q(s,a)); `a_next` is ignored
/// when `s_next` is terminal.
#[allow(clippy::too_many_arguments)]
pub fn sarsa_update(
    q: &mut QTable,
    mdp: &Mdp,
    s: u32,
    a: Action,
    r: f64,
    s_next: u32,
    a_next: Option<Action>,
    cfg: &AgentConfig,
) -> Result<(), AgentError> {
    let pair = legal_pair(mdp, s, a)?;
    let bootstrap = if mdp.is_terminal(s_next) {
        0.0
    } else {
        let a_next = a_next.ok_or(AgentError::InvalidConfig(format!(
            "SARSA needs the next action in non-terminal state {s_next}"
        )))?;
        q.values[legal_pair(mdp, s_next, a_next)?]
    };
    let old = q.values[pair];
    q.values[pair] = old + cfg.alpha * (r + cfg.discount * bootstrap - old);
    Ok(())
}

/// Softmax of Q(s, .)/temperature over the legal actions of `s`, shifted by
/// the maximum for stability.
pub fn boltzmann_probs(q: &QTable, mdp: &Mdp, s: u32, temperature: f64) -> SmallVec<[f64; 4]> {
    let vals = &q.values[mdp.pair_range(s)];
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: SmallVec<[f64; 4]> = vals.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    probs
}

/// Index (within the legal actions of `s`) of a maximizer, ties uniform.
fn greedy_index(vals: &[f64], rng: &mut impl Rng) -> usize {
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: SmallVec<[usize; 4]> = (0..vals.len()).filter(|&i| vals[i] == max).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// Greedy action with uniform tie-breaking.
pub fn greedy_select(q: &QTable, mdp: &Mdp, s: u32, rng: &mut impl Rng) -> Action {
    let r = mdp.pair_range(s);
    mdp.legal_actions(s)[greedy_index(&q.values[r], rng)]
}

/// Uniform legal action with probability `epsilon`, otherwise greedy.
pub fn epsilon_greedy_select(q: &QTable, mdp: &Mdp, s: u32, epsilon: f64, rng: &mut impl Rng) -> Action {
    let legal = mdp.legal_actions(s);
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        legal[rng.random_range(0..legal.len())]
    } else {
        greedy_select(q, mdp, s, rng)
    }
}

pub fn boltzmann_select(q: &QTable, mdp: &Mdp, s: u32, temperature: f64, rng: &mut impl Rng) -> Action {
    let probs = boltzmann_probs(q, mdp, s, temperature);
    let legal = mdp.legal_actions(s);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return legal[i];
        }
    }
    legal[legal.len() - 1]
}

/// Action drawn from the configured exploration policy.
pub fn explore_select(q: &QTable, mdp: &Mdp, s: u32, exploration: Exploration, rng: &mut impl Rng) -> Action {
    match exploration {
        Exploration::Boltzmann { temperature } => boltzmann_select(q, mdp, s, temperature, rng),
        Exploration::EpsilonGreedy { epsilon } => epsilon_greedy_select(q, mdp, s, epsilon, rng),
    }
}

#[cfg(test)]
mod tests;
