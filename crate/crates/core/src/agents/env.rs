use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::AgentError;
use crate::games::Action;
use crate::mdp::{Mdp, TransitionTable};
use crate::noise::{row_seed, NoiseSpec, RowPerturber};
use crate::seed::rng_from;

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: u32,
    pub reward: f64,
    pub terminal: bool,
}

/// Episodic environment over the states of an [`Mdp`].
pub trait Environment {
    fn mdp(&self) -> &Mdp;
    /// Starts a new episode and returns its initial state.
    fn reset(&mut self) -> u32;
    fn step(&mut self, state: u32, action: Action) -> Result<Step, AgentError>;
}

#[inline]
fn sample_sparse(succ: &[u32], prob: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    for (&j, &p) in succ.iter().zip(prob) {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left u above the accumulated mass: take the last positive entry.
    succ[prob.iter().rposition(|&p| p > 0.0).unwrap_or(succ.len() - 1)]
}

fn finish(mdp: &Mdp, state: u32, next: u32) -> Result<Step, AgentError> {
    if next as usize >= mdp.state_count() {
        return Err(AgentError::EnvironmentFault { state, successor: next });
    }
    Ok(Step { next, reward: mdp.reward(state, next), terminal: mdp.is_terminal(next) })
}

fn check_aligned(mdp: &Mdp, table: &TransitionTable) -> Result<(), AgentError> {
    let aligned = table.row_count() == mdp.pair_count()
        && (0..mdp.pair_count()).all(|p| table.key(p) == mdp.pair_key(p));
    if aligned {
        Ok(())
    } else {
        Err(AgentError::MisalignedTable)
    }
}

/// Samples successors from a fixed table (the MDP's own or a frozen perturbed one).
#[derive(Debug, Clone)]
pub struct TableEnv {
    mdp: Arc<Mdp>,
    table: Arc<TransitionTable>,
    rng: ChaCha8Rng,
}

impl TableEnv {
    pub fn new(mdp: Arc<Mdp>, seed: u64) -> Self {
        let table = mdp.shared_transitions();
        Self { mdp, table, rng: rng_from(seed) }
    }

    pub fn with_table(mdp: Arc<Mdp>, table: Arc<TransitionTable>, seed: u64) -> Result<Self, AgentError> {
        check_aligned(&mdp, &table)?;
        Ok(Self { mdp, table, rng: rng_from(seed) })
    }
}

impl Environment for TableEnv {
    fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    fn reset(&mut self) -> u32 {
        self.mdp.initial_state()
    }

    fn step(&mut self, state: u32, action: Action) -> Result<Step, AgentError> {
        let pair = self.mdp.pair(state, action).ok_or(AgentError::IllegalAction { state, action })?;
        let (succ, prob) = self.table.row(self.mdp.row_of_pair(pair));
        let next = sample_sparse(succ, prob, self.rng.random());
        finish(&self.mdp, state, next)
    }
}

#[derive(Debug)]
struct CachedRow {
    succ: Vec<u32>,
    cum: Vec<f64>,
}

/// Delta-environment that perturbs rows lazily on first visit within an
/// episode. Row draws are keyed by (noise seed, episode, state, action), so
/// the rows seen are identical to an eagerly materialized table for the
/// same episode key.
#[derive(Debug)]
pub struct NoisyEnv {
    mdp: Arc<Mdp>,
    noise: NoiseSpec,
    next_episode: u64,
    episode: u64,
    cache: HashMap<usize, CachedRow>,
    perturber: RowPerturber,
    scratch: Vec<(u32, f64)>,
    degenerate: usize,
    rng: ChaCha8Rng,
}

impl NoisyEnv {
    /// `noise.seed` keys the row draws; `sample_seed` drives successor sampling.
    pub fn new(mdp: Arc<Mdp>, noise: NoiseSpec, sample_seed: u64) -> Result<Self, AgentError> {
        check_aligned(&mdp, mdp.transitions())?;
        Ok(Self {
            mdp,
            noise,
            next_episode: 0,
            episode: 0,
            cache: HashMap::new(),
            perturber: RowPerturber::new(),
            scratch: Vec::new(),
            degenerate: 0,
            rng: rng_from(sample_seed),
        })
    }

    /// Episode key currently used for row draws.
    pub fn episode_key(&self) -> u64 {
        self.episode
    }

    /// Rows that fell back to the base distribution so far.
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate
    }

    fn row(&mut self, pair: usize) -> &CachedRow {
        let mdp = &self.mdp;
        let noise = &self.noise;
        let episode = self.episode;
        let perturber = &mut self.perturber;
        let scratch = &mut self.scratch;
        let degenerate = &mut self.degenerate;
        self.cache.entry(pair).or_insert_with(|| {
            let (s, a) = mdp.pair_key(pair);
            let seed = row_seed(noise.seed, episode, s, a);
            if !perturber.perturb(mdp, mdp.transitions(), mdp.row_of_pair(pair), noise, seed, scratch) {
                *degenerate += 1;
            }
            let mut acc = 0.0;
            let mut succ = Vec::with_capacity(scratch.len());
            let mut cum = Vec::with_capacity(scratch.len());
            for &(j, p) in scratch.iter() {
                acc += p;
                succ.push(j);
                cum.push(acc);
            }
            CachedRow { succ, cum }
        })
    }
}

impl Environment for NoisyEnv {
    fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    fn reset(&mut self) -> u32 {
        if self.noise.resample_per_episode {
            self.episode = self.next_episode;
            self.next_episode += 1;
            self.cache.clear();
        }
        self.mdp.initial_state()
    }

    fn step(&mut self, state: u32, action: Action) -> Result<Step, AgentError> {
        let pair = self.mdp.pair(state, action).ok_or(AgentError::IllegalAction { state, action })?;
        let u: f64 = self.rng.random();
        let row = self.row(pair);
        let total = *row.cum.last().expect("rows are non-empty");
        let target = u * total;
        let k = row.cum.partition_point(|&c| c <= target).min(row.succ.len() - 1);
        let next = row.succ[k];
        finish(&self.mdp, state, next)
    }
}
