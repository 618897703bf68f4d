//! Exact finite MDPs: state enumeration, sparse transition tables, rewards.

mod build;
mod export;
mod validate;

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_transition_table, enumerate_states, enumerate_states_joint, DEFAULT_STATE_CAP};
pub use export::{read_mdp, write_mdp, write_mdp_with_table};
pub use validate::{validate_mdp, Issue, ValidationReport};

use crate::games::{Action, Configuration, GameError, GameKind, GameSpec, Status};

/// Row-sum tolerance for every transition table.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("state space exceeds the cap of {cap} states")]
    StateSpaceOverflow { cap: usize },
    #[error("successor of state {state} under {action:?} is missing from the state index")]
    InconsistentIndex { state: u32, action: Action },
    #[error("games cannot share a state index: {0}")]
    IncompatibleGames(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reward constants, applied per transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub step_penalty: f64,
    pub food_reward: f64,
    pub death_penalty: f64,
    pub win_reward: f64,
}

impl RewardSpec {
    /// PacMan constants from the main experimental description.
    pub const PACMAN: RewardSpec =
        RewardSpec { step_penalty: -1.0, food_reward: 20.0, death_penalty: -200.0, win_reward: 500.0 };
    /// Alternative PacMan constants (+10 food, -500 death).
    pub const PACMAN_ALT: RewardSpec =
        RewardSpec { step_penalty: -1.0, food_reward: 10.0, death_penalty: -500.0, win_reward: 500.0 };
    /// Pong and Breakout: +10 per brick, -1 per step, +/-500 at the end.
    pub const PADDLE: RewardSpec =
        RewardSpec { step_penalty: -1.0, food_reward: 10.0, death_penalty: -500.0, win_reward: 500.0 };

    pub fn default_for(kind: GameKind) -> Self {
        match kind {
            GameKind::PacMan => Self::PACMAN,
            GameKind::Pong | GameKind::Breakout => Self::PADDLE,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all_finite = [self.step_penalty, self.food_reward, self.death_penalty, self.win_reward]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err("reward constants must be finite".into());
        }
        if self.step_penalty >= 0.0 {
            return Err(format!("step_penalty {} must be negative", self.step_penalty));
        }
        if self.win_reward <= 0.0 {
            return Err(format!("win_reward {} must be positive", self.win_reward));
        }
        if self.death_penalty >= 0.0 {
            return Err(format!("death_penalty {} must be negative", self.death_penalty));
        }
        Ok(())
    }

    /// r(s, a, s') = step + food * items consumed + win/death on entering a terminal.
    #[inline]
    pub fn transition_reward(&self, items_before: u64, items_after: u64, status_after: Status) -> f64 {
        let eaten = GameSpec::items_consumed(items_before, items_after);
        let mut r = self.step_penalty + self.food_reward * f64::from(eaten);
        match status_after {
            Status::Win => r += self.win_reward,
            Status::Loss => r += self.death_penalty,
            Status::NonTerminal => {}
        }
        r
    }

    /// Largest absolute single-transition reward.
    pub fn max_abs_reward(&self, max_items: u32) -> f64 {
        self.step_penalty.abs()
            + self.food_reward.abs() * f64::from(max_items)
            + self.win_reward.abs().max(self.death_penalty.abs())
    }
}

/// Dense ids for the enumerated configurations. State 0 is the initial one.
#[derive(Debug, Clone, Default)]
pub struct StateIndex {
    states: Vec<Configuration>,
    id_of: HashMap<Configuration, u32>,
}

impl StateIndex {
    pub fn from_states(states: Vec<Configuration>) -> Result<Self, MdpError> {
        let mut id_of = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if id_of.insert(s.clone(), i as u32).is_some() {
                return Err(MdpError::Parse { line: 0, msg: format!("duplicate state {i}") });
            }
        }
        Ok(Self { states, id_of })
    }

    pub(crate) fn push(&mut self, c: Configuration) -> u32 {
        let id = self.states.len() as u32;
        self.id_of.insert(c.clone(), id);
        self.states.push(c);
        id
    }

    pub fn count(&self) -> usize {
        self.states.len()
    }

    pub fn id_of(&self, c: &Configuration) -> Option<u32> {
        self.id_of.get(c).copied()
    }

    pub fn state(&self, id: u32) -> &Configuration {
        &self.states[id as usize]
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }
}

/// Sparse rows keyed by (state, action), each a distribution over successor ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionTable {
    keys: Vec<(u32, Action)>,
    starts: Vec<usize>,
    succ: Vec<u32>,
    prob: Vec<f64>,
}

impl TransitionTable {
    pub fn from_rows(rows: impl IntoIterator<Item = ((u32, Action), Vec<(u32, f64)>)>) -> Self {
        let mut t = Self { starts: vec![0], ..Self::default() };
        for (key, entries) in rows {
            t.push_row(key, entries.iter().copied());
        }
        t
    }

    pub(crate) fn with_capacity(rows: usize, entries: usize) -> Self {
        let mut starts = Vec::with_capacity(rows + 1);
        starts.push(0);
        Self {
            keys: Vec::with_capacity(rows),
            starts,
            succ: Vec::with_capacity(entries),
            prob: Vec::with_capacity(entries),
        }
    }

    pub(crate) fn push_row(&mut self, key: (u32, Action), entries: impl IntoIterator<Item = (u32, f64)>) {
        for (s, p) in entries {
            self.succ.push(s);
            self.prob.push(p);
        }
        self.keys.push(key);
        self.starts.push(self.succ.len());
    }

    pub fn row_count(&self) -> usize {
        self.keys.len()
    }

    pub fn entry_count(&self) -> usize {
        self.succ.len()
    }

    pub fn key(&self, row: usize) -> (u32, Action) {
        self.keys[row]
    }

    pub fn keys(&self) -> &[(u32, Action)] {
        &self.keys
    }

    /// (successor ids, probabilities) of `row`.
    #[inline]
    pub fn row(&self, row: usize) -> (&[u32], &[f64]) {
        let r = self.starts[row]..self.starts[row + 1];
        (&self.succ[r.clone()], &self.prob[r])
    }

    pub fn find(&self, state: u32, action: Action) -> Option<usize> {
        self.keys.binary_search(&(state, action)).ok()
    }

    pub fn rows(&self) -> impl Iterator<Item = ((u32, Action), &[u32], &[f64])> + '_ {
        (0..self.row_count()).map(move |i| {
            let (s, p) = self.row(i);
            (self.keys[i], s, p)
        })
    }
}

/// Exact finite MDP (S, A, T, R, discount).
#[derive(Debug, Clone)]
pub struct Mdp {
    kind: GameKind,
    index: Arc<StateIndex>,
    legal_start: Vec<usize>,
    legal: Vec<Action>,
    transitions: Arc<TransitionTable>,
    rewards: RewardSpec,
    discount: f64,
    status: Vec<Status>,
    items: Vec<u64>,
}

impl Mdp {
    /// Enumerates the states of `game` and builds its transition table.
    pub fn build(game: &GameSpec) -> Result<Self, MdpError> {
        let index = Arc::new(enumerate_states(game)?);
        Self::assemble(game, index)
    }

    /// Builds the MDP of `game` over an existing (possibly shared) state index.
    pub fn assemble(game: &GameSpec, index: Arc<StateIndex>) -> Result<Self, MdpError> {
        let table = build_transition_table(game, &index)?;
        let mut legal_start = Vec::with_capacity(index.count() + 1);
        let mut legal = Vec::new();
        let mut status = Vec::with_capacity(index.count());
        let mut items = Vec::with_capacity(index.count());
        legal_start.push(0);
        for c in index.states() {
            legal.extend(game.legal_actions(c));
            legal_start.push(legal.len());
            status.push(game.status(c));
            items.push(c.items);
        }
        Ok(Self {
            kind: game.kind,
            index,
            legal_start,
            legal,
            transitions: Arc::new(table),
            rewards: game.rewards,
            discount: game.discount,
            status,
            items,
        })
    }

    /// Unchecked constructor; run [`validate_mdp`] on the result.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: GameKind,
        index: Arc<StateIndex>,
        legal_actions: Vec<Vec<Action>>,
        transitions: TransitionTable,
        rewards: RewardSpec,
        discount: f64,
        status: Vec<Status>,
    ) -> Self {
        let mut legal_start = vec![0];
        let mut legal = Vec::new();
        for acts in legal_actions {
            legal.extend(acts);
            legal_start.push(legal.len());
        }
        let items = index.states().iter().map(|c| c.items).collect();
        Self {
            kind,
            index,
            legal_start,
            legal,
            transitions: Arc::new(transitions),
            rewards,
            discount,
            status,
            items,
        }
    }

    /// Same MDP with a different transition table.
    pub fn with_transitions(&self, table: TransitionTable) -> Self {
        Self { transitions: Arc::new(table), ..self.clone() }
    }

    pub fn kind(&self) -> GameKind {
        self.kind
    }

    pub fn action_set(&self) -> &'static [Action] {
        self.kind.actions()
    }

    pub fn index(&self) -> &Arc<StateIndex> {
        &self.index
    }

    pub fn state_count(&self) -> usize {
        self.index.count()
    }

    pub fn initial_state(&self) -> u32 {
        0
    }

    pub fn transitions(&self) -> &TransitionTable {
        &self.transitions
    }

    pub fn shared_transitions(&self) -> Arc<TransitionTable> {
        Arc::clone(&self.transitions)
    }

    pub fn rewards(&self) -> &RewardSpec {
        &self.rewards
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    #[inline]
    pub fn status(&self, state: u32) -> Status {
        self.status[state as usize]
    }

    #[inline]
    pub fn is_terminal(&self, state: u32) -> bool {
        self.status[state as usize].is_terminal()
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.state_count() as u32).filter(|&s| self.is_terminal(s))
    }

    #[inline]
    pub fn items(&self, state: u32) -> u64 {
        self.items[state as usize]
    }

    #[inline]
    pub fn legal_actions(&self, state: u32) -> &[Action] {
        &self.legal[self.pair_range(state)]
    }

    /// Pair indices of `state`, in canonical action order.
    #[inline]
    pub fn pair_range(&self, state: u32) -> Range<usize> {
        self.legal_start[state as usize]..self.legal_start[state as usize + 1]
    }

    pub fn pair_count(&self) -> usize {
        self.legal.len()
    }

    pub fn pair(&self, state: u32, action: Action) -> Option<usize> {
        let r = self.pair_range(state);
        self.legal[r.clone()].iter().position(|&a| a == action).map(|i| r.start + i)
    }

    /// (state, action) of a pair index.
    pub fn pair_key(&self, pair: usize) -> (u32, Action) {
        let s = self.legal_start.partition_point(|&start| start <= pair) - 1;
        (s as u32, self.legal[pair])
    }

    /// Row of the transition table for a pair, when the table is aligned
    /// with the pair enumeration (always true for built MDPs).
    #[inline]
    pub fn row_of_pair(&self, pair: usize) -> usize {
        pair
    }

    #[inline]
    pub fn reward(&self, state: u32, next: u32) -> f64 {
        self.rewards
            .transition_reward(self.items[state as usize], self.items[next as usize], self.status[next as usize])
    }

    /// Largest item count over all states.
    pub fn max_items(&self) -> u32 {
        self.items.iter().map(|m| m.count_ones()).max().unwrap_or(0)
    }
}
