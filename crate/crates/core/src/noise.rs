//! Gaussian noise injection into transition tables (delta-environments).
//!
//! For a row of state `s_i` under action `a`, every candidate successor `j` of
//! the full state index receives `raw_j = |S| * p_ij + delta_ij` with
//! `delta_ij ~ N(0, std^2)`. Negative values are clamped to zero and the row is
//! re-summed to one. Scaling by `|S|` keeps the mass of the original
//! successors from vanishing as the state space grows, while successors with
//! zero base probability can become reachable.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::games::Action;
use crate::mdp::{Mdp, TransitionTable};
use crate::seed::{derive, rng_from, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("noise std must be finite and non-negative, got {0}")]
    InvalidStd(f64),
    #[error("tables differ in shape: {0}")]
    ShapeMismatch(String),
}

fn default_true() -> bool {
    true
}
fn default_dense_cap() -> usize {
    20_000
}
fn default_sample_k() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of the additive Gaussian noise.
    #[serde(default)]
    pub std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Draw fresh noise before each episode; otherwise one table is frozen.
    #[serde(default = "default_true")]
    pub resample_per_episode: bool,
    /// Above this many states only a sample of non-successor candidates is perturbed.
    #[serde(default = "default_dense_cap")]
    pub dense_support_cap: usize,
    /// Number of sampled non-successor candidates per row in sparse mode.
    #[serde(default = "default_sample_k")]
    pub sparse_sample_k: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::new(0.0, 0)
    }
}

impl NoiseSpec {
    pub fn new(std: f64, seed: u64) -> Self {
        Self {
            std,
            seed,
            resample_per_episode: true,
            dense_support_cap: default_dense_cap(),
            sparse_sample_k: default_sample_k(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.std == 0.0
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !self.std.is_finite() || self.std < 0.0 {
            return Err(NoiseError::InvalidStd(self.std));
        }
        Ok(())
    }

    /// True when rows of `mdp` would use the sampled-candidate approximation.
    pub fn is_approximate_for(&self, mdp: &Mdp) -> bool {
        !self.is_zero() && mdp.state_count() > self.dense_support_cap
    }
}

/// Seed of the noise draws for one row in one episode.
#[inline]
pub fn row_seed(noise_seed: u64, episode: u64, state: u32, action: Action) -> u64 {
    derive(&[noise_seed, episode, u64::from(state), action as u64, Stream::NoiseRow as u64])
}

/// Dense perturbation of one row with explicit draws: `raw_j = n * p_j + deltas[j]`
/// over all `n = deltas.len()` states, clamped at zero and renormalized into
/// `out` (sorted by successor). `deltas` is overwritten with the raw values.
/// Returns false, leaving `out` empty, when nothing stays positive.
pub fn apply_deltas(succ: &[u32], prob: &[f64], deltas: &mut [f64], out: &mut Vec<(u32, f64)>) -> bool {
    out.clear();
    let scale = deltas.len() as f64;
    for (&j, &p) in succ.iter().zip(prob) {
        deltas[j as usize] += scale * p;
    }
    let mut total = 0.0;
    for (j, &v) in deltas.iter().enumerate() {
        if v > 0.0 {
            out.push((j as u32, v));
            total += v;
        }
    }
    if total <= 0.0 || !total.is_finite() {
        out.clear();
        return false;
    }
    for e in out.iter_mut() {
        e.1 /= total;
    }
    true
}

/// Reusable scratch space for perturbing rows.
#[derive(Debug, Default)]
pub struct RowPerturber {
    raw: Vec<f64>,
}

impl RowPerturber {
    pub fn new() -> Self {
        Self::default()
    }

    /// Perturbed version of `mdp`'s row `row`, written to `out` sorted by
    /// successor id. Returns false if every value clamped to zero, in which
    /// case `out` holds the unperturbed row.
    pub fn perturb(
        &mut self,
        mdp: &Mdp,
        base: &TransitionTable,
        row: usize,
        noise: &NoiseSpec,
        seed: u64,
        out: &mut Vec<(u32, f64)>,
    ) -> bool {
        out.clear();
        let (succ, prob) = base.row(row);
        if noise.is_zero() {
            out.extend(succ.iter().copied().zip(prob.iter().copied()));
            return true;
        }
        let n = mdp.state_count();
        let scale = n as f64;
        let mut rng = rng_from(seed);
        let std = noise.std;
        if n <= noise.dense_support_cap {
            self.raw.clear();
            self.raw.extend((0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)));
            if !apply_deltas(succ, prob, &mut self.raw, out) {
                out.extend(succ.iter().copied().zip(prob.iter().copied()));
                return false;
            }
            return true;
        }
        // Legal successors first, then k sampled other candidates, each
        // standing in for (n - m) / k of the remaining states.
        for (&j, &p) in succ.iter().zip(prob) {
            let v = scale * p + std * rng.sample::<f64, _>(StandardNormal);
            if v > 0.0 {
                out.push((j, v));
            }
        }
        let k = noise.sparse_sample_k;
        let others = n - succ.len();
        if k > 0 && others > 0 {
            let weight = others as f64 / k as f64;
            for _ in 0..k {
                let j = loop {
                    let j = rng.random_range(0..n) as u32;
                    if succ.binary_search(&j).is_err() {
                        break j;
                    }
                };
                let v = std * rng.sample::<f64, _>(StandardNormal);
                if v > 0.0 {
                    out.push((j, v * weight));
                }
            }
        }
        out.sort_unstable_by_key(|&(j, _)| j);
        out.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        let total: f64 = out.iter().map(|&(_, v)| v).sum();
        if total <= 0.0 || !total.is_finite() {
            out.clear();
            out.extend(succ.iter().copied().zip(prob.iter().copied()));
            return false;
        }
        for e in out.iter_mut() {
            e.1 /= total;
        }
        true
    }
}

/// An MDP whose transition table was perturbed by Gaussian noise.
#[derive(Debug, Clone)]
pub struct DeltaEnvironment {
    pub base: Arc<Mdp>,
    pub perturbed: TransitionTable,
    pub noise: NoiseSpec,
    /// Episode key the rows were drawn with (0 for the initial injection).
    pub realized_seed: u64,
    /// True when the sampled-candidate approximation was used.
    pub approximate: bool,
    /// Rows that fell back to the base distribution because every value clamped to zero.
    pub degenerate_rows: Vec<(u32, Action)>,
}

impl DeltaEnvironment {
    /// The base MDP with the perturbed table in place of its own.
    pub fn to_mdp(&self) -> Mdp {
        self.base.with_transitions(self.perturbed.clone())
    }
}

fn realize(mdp: &Arc<Mdp>, noise: &NoiseSpec, episode: u64) -> DeltaEnvironment {
    let base = mdp.transitions();
    let mut perturber = RowPerturber::new();
    let mut table = TransitionTable::from_rows(std::iter::empty());
    let mut row = Vec::new();
    let mut degenerate = Vec::new();
    for r in 0..base.row_count() {
        let (s, a) = base.key(r);
        let seed = row_seed(noise.seed, episode, s, a);
        if !perturber.perturb(mdp, base, r, noise, seed, &mut row) {
            degenerate.push((s, a));
        }
        table.push_row((s, a), row.iter().copied());
    }
    DeltaEnvironment {
        base: Arc::clone(mdp),
        perturbed: table,
        noise: *noise,
        realized_seed: episode,
        approximate: noise.is_approximate_for(mdp),
        degenerate_rows: degenerate,
    }
}

/// Perturbs every row of `mdp`'s table. `std == 0` reproduces it exactly.
pub fn inject_noise(mdp: Arc<Mdp>, noise: NoiseSpec) -> Result<DeltaEnvironment, NoiseError> {
    noise.validate()?;
    Ok(realize(&mdp, &noise, 0))
}

/// Fresh draws for the episode keyed by `episode_seed`. A frozen-noise
/// environment is returned unchanged.
pub fn resample(env: &DeltaEnvironment, episode_seed: u64) -> DeltaEnvironment {
    if !env.noise.resample_per_episode {
        return env.clone();
    }
    realize(&env.base, &env.noise, episode_seed)
}

/// Mean total-variation distance between corresponding rows.
pub fn table_distance(a: &TransitionTable, b: &TransitionTable) -> Result<f64, NoiseError> {
    if a.keys() != b.keys() {
        return Err(NoiseError::ShapeMismatch(format!(
            "{} rows vs {} rows or differing row keys",
            a.row_count(),
            b.row_count()
        )));
    }
    if a.row_count() == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for r in 0..a.row_count() {
        let (sa, pa) = a.row(r);
        let (sb, pb) = b.row(r);
        let (mut i, mut j, mut tv) = (0, 0, 0.0);
        while i < sa.len() || j < sb.len() {
            match (sa.get(i), sb.get(j)) {
                (Some(x), Some(y)) if x == y => {
                    tv += (pa[i] - pb[j]).abs();
                    i += 1;
                    j += 1;
                }
                (Some(x), Some(y)) if x < y => {
                    tv += pa[i];
                    i += 1;
                }
                (Some(_), None) => {
                    tv += pa[i];
                    i += 1;
                }
                _ => {
                    tv += pb[j];
                    j += 1;
                }
            }
        }
        total += 0.5 * tv;
    }
    Ok(total / a.row_count() as f64)
}

#[cfg(test)]
mod tests;
