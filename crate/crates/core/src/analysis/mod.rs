//! Exploration divergence, reward gaps, learning-curve summaries and the
//! statistics used to compare Learnability and Generalization populations.

mod report;
pub mod special;

use thiserror::Error;

pub use report::{suite_report, write_report, Grouping, ReportRow, SuiteReport};

use crate::bitset::PairSet;
use crate::games::Action;
use crate::harness::{CurvePoint, RunResult};
use crate::mdp::Mdp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("both visited sets are empty")]
    EmptyUnion,
    #[error("pair sets have different capacities ({0} vs {1})")]
    CapacityMismatch(usize, usize),
    #[error("visited set is not a subset of the universe")]
    NotSubset,
    #[error("generalization regret is zero")]
    ZeroRegret,
    #[error("samples are degenerate (need n >= 2 each and nonzero variance)")]
    DegenerateSamples,
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFewSamples(usize),
    #[error("ranks are degenerate (constant input)")]
    DegenerateRanks,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationStats {
    pub p_lg: f64,
    pub p_l: f64,
    pub p_g: f64,
    pub d_lg: f64,
    pub universe: usize,
    pub union: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    pub r_l: f64,
    pub r_g: f64,
    pub r_lg: f64,
}

impl GapStats {
    pub fn new(r_l: f64, r_g: f64) -> Self {
        Self { r_l, r_g, r_lg: r_g - r_l }
    }

    pub fn from_runs(l: &RunResult, g: &RunResult) -> Self {
        Self::new(final_mean(l), final_mean(g))
    }
}

/// Mean test return at the last checkpoint.
pub fn final_mean(r: &RunResult) -> f64 {
    r.curve.last().map_or(f64::NAN, |p| p.mean_return)
}

/// Percentages over the union of the two visited sets.
pub fn exploration_stats(
    visited_l: &PairSet,
    visited_g: &PairSet,
    universe: &PairSet,
) -> Result<ExplorationStats, AnalysisError> {
    for v in [visited_l, visited_g] {
        if v.capacity() != universe.capacity() {
            return Err(AnalysisError::CapacityMismatch(v.capacity(), universe.capacity()));
        }
        if !v.is_subset(universe) {
            return Err(AnalysisError::NotSubset);
        }
    }
    let both = visited_l.intersection_count(visited_g);
    let only_l = visited_l.count() - both;
    let only_g = visited_g.count() - both;
    let union = both + only_l + only_g;
    if union == 0 {
        return Err(AnalysisError::EmptyUnion);
    }
    let pct = |k: usize| 100.0 * k as f64 / union as f64;
    let (p_lg, p_l, p_g) = (pct(both), pct(only_l), pct(only_g));
    Ok(ExplorationStats { p_lg, p_l, p_g, d_lg: p_l + p_g, universe: universe.count(), union })
}

/// Legal (state, action) layout of an MDP, enough to place pair indices on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLayout {
    pub action_set: Vec<Action>,
    /// Bit i set when `action_set[i]` is legal in the state.
    pub legal_masks: Vec<u8>,
}

impl PairLayout {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let action_set = mdp.action_set().to_vec();
        let legal_masks = (0..mdp.state_count() as u32)
            .map(|s| {
                mdp.legal_actions(s).iter().fold(0u8, |m, a| {
                    m | 1 << action_set.iter().position(|b| b == a).expect("action in set")
                })
            })
            .collect();
        Self { action_set, legal_masks }
    }

    pub fn from_run(r: &RunResult) -> Self {
        Self { action_set: r.action_set.clone(), legal_masks: r.legal_masks.clone() }
    }

    pub fn pair_count(&self) -> usize {
        self.legal_masks.iter().map(|m| m.count_ones() as usize).sum()
    }

    /// Every legal pair.
    pub fn universe(&self) -> PairSet {
        let n = self.pair_count();
        PairSet::from_indices(n, 0..n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Both,
    OnlyL,
    OnlyG,
    Neither,
    /// The action is not legal in the state.
    Illegal,
}

impl Cell {
    pub fn name(self) -> &'static str {
        match self {
            Cell::Both => "both",
            Cell::OnlyL => "only_l",
            Cell::OnlyG => "only_g",
            Cell::Neither => "neither",
            Cell::Illegal => "illegal",
        }
    }

    pub fn color_index(self) -> u8 {
        self as u8
    }
}

/// Actions × states matrix of visit categories.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationGrid {
    pub actions: Vec<Action>,
    pub states: usize,
    cells: Vec<Cell>,
}

impl ExplorationGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.actions.len(), self.states)
    }

    pub fn get(&self, action_row: usize, state: usize) -> Cell {
        self.cells[action_row * self.states + state]
    }

    pub fn count(&self, cell: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == cell).count()
    }

    fn write_matrix(&self, f: impl Fn(Cell) -> String) -> String {
        let mut out = String::from("action");
        for s in 0..self.states {
            out.push_str(&format!(",s{s}"));
        }
        out.push('\n');
        for (r, a) in self.actions.iter().enumerate() {
            out.push(a.symbol());
            for s in 0..self.states {
                out.push(',');
                out.push_str(&f(self.get(r, s)));
            }
            out.push('\n');
        }
        out
    }

    /// Category names, one row per action.
    pub fn to_csv(&self) -> String {
        self.write_matrix(|c| c.name().to_string())
    }

    /// Same matrix with numeric color indices.
    pub fn to_color_csv(&self) -> String {
        self.write_matrix(|c| c.color_index().to_string())
    }
}

pub fn exploration_grid(visited_l: &PairSet, visited_g: &PairSet, layout: &PairLayout) -> ExplorationGrid {
    let states = layout.legal_masks.len();
    let mut cells = vec![Cell::Illegal; layout.action_set.len() * states];
    let mut pair = 0;
    for (s, &mask) in layout.legal_masks.iter().enumerate() {
        for r in 0..layout.action_set.len() {
            if mask & (1 << r) == 0 {
                continue;
            }
            let (l, g) = (visited_l.contains(pair), visited_g.contains(pair));
            cells[r * states + s] = match (l, g) {
                (true, true) => Cell::Both,
                (true, false) => Cell::OnlyL,
                (false, true) => Cell::OnlyG,
                (false, false) => Cell::Neither,
            };
            pair += 1;
        }
    }
    ExplorationGrid { actions: layout.action_set.clone(), states, cells }
}

/// Trapezoidal area of (x, y) points divided by the x span; a single point
/// returns its y.
pub fn auc_points(points: &[(f64, f64)]) -> f64 {
    match points {
        [] => f64::NAN,
        [(_, y)] => *y,
        _ => {
            let area: f64 = points.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
            area / (points[points.len() - 1].0 - points[0].0)
        }
    }
}

pub fn auc(curve: &[CurvePoint]) -> f64 {
    let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.episode as f64, p.mean_return)).collect();
    auc_points(&pts)
}

/// (r_max − AUC_L) / (r_max − AUC_G) from the two AUCs.
pub fn regret_ratio_auc(auc_l: f64, auc_g: f64, r_max: f64) -> Result<f64, AnalysisError> {
    let regret_g = r_max - auc_g;
    if regret_g == 0.0 {
        return Err(AnalysisError::ZeroRegret);
    }
    Ok((r_max - auc_l) / regret_g)
}

pub fn regret_ratio(l: &RunResult, g: &RunResult, r_max: f64) -> Result<f64, AnalysisError> {
    regret_ratio_auc(auc(&l.curve), auc(&g.curve), r_max)
}

/// Optimistic undiscounted episode return from the initial state: every
/// successor with positive probability may be chosen. For PacMan this is
/// the win reward plus all pellets minus the shortest clearing path.
/// `-inf` when no terminal state is reachable.
pub fn best_case_return(mdp: &Mdp) -> f64 {
    let n = mdp.state_count();
    let mut v: Vec<f64> = (0..n as u32).map(|s| if mdp.is_terminal(s) { 0.0 } else { f64::NEG_INFINITY }).collect();
    let table = mdp.transitions();
    // Every cycle loses at least one step penalty, so relaxation converges
    // within n sweeps; sweeping in reverse BFS order usually needs few.
    for _ in 0..n.max(1) {
        let mut changed = false;
        for s in (0..n as u32).rev() {
            if mdp.is_terminal(s) {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for pair in mdp.pair_range(s) {
                let (succ, prob) = table.row(mdp.row_of_pair(pair));
                for (&j, &p) in succ.iter().zip(prob) {
                    if p > 0.0 {
                        best = best.max(mdp.reward(s, j) + v[j as usize]);
                    }
                }
            }
            if best > v[s as usize] {
                v[s as usize] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    v[mdp.initial_state() as usize]
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test. Returns (t, two-sided p); t > 0 when
/// mean(a) > mean(b).
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64), AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::DegenerateSamples);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2.is_nan() || se2 <= 0.0 {
        return Err(AnalysisError::DegenerateSamples);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok((t, special::t_two_sided_p(t, df)))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with a t-approximation two-sided p-value.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(AnalysisError::TooFewSamples(n));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in rx.iter().zip(&ry) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::DegenerateRanks);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if rho.abs() == 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        special::t_two_sided_p(t, df)
    };
    Ok((rho, p))
}
