//! Grid-game dynamics for PacMan, Pong and Breakout.
//!
//! A [`GameSpec`] bundles a layout, the policies of its stochastic elements
//! and reward constants. Its [`GameSpec::successors`] function is the single
//! source of truth for the exact transition probabilities consumed by
//! [`crate::mdp`].

mod layout;
mod policy;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub use layout::LayoutSpec;
pub use policy::{element_move_distribution, ElementMove, ElementPolicy, PolicyKind};

use crate::mdp::RewardSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid layout: {0}")]
    LayoutInvalid(String),
    #[error("unknown built-in layout '{0}'")]
    UnknownLayout(String),
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),
    #[error("element {element} has no legal move")]
    NoLegalMove { element: usize },
    #[error("no stochastic element with index {0}")]
    NoSuchElement(usize),
    #[error("action {action:?} is not legal in this configuration")]
    IllegalAction { action: Action },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Up,
    Down,
    Stop,
}

pub const PACMAN_ACTIONS: [Action; 4] = [Action::Left, Action::Right, Action::Up, Action::Down];
pub const PADDLE_ACTIONS: [Action; 3] = [Action::Left, Action::Right, Action::Stop];

impl Action {
    /// (row, column) offset.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Stop => (0, 0),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Action::Left => 'L',
            Action::Right => 'R',
            Action::Up => 'U',
            Action::Down => 'D',
            Action::Stop => 'S',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            'L' => Action::Left,
            'R' => Action::Right,
            'U' => Action::Up,
            'D' => Action::Down,
            'S' => Action::Stop,
            _ => return None,
        })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    #[serde(alias = "pac_man")]
    PacMan,
    Pong,
    Breakout,
}

impl GameKind {
    pub fn actions(self) -> &'static [Action] {
        match self {
            GameKind::PacMan => &PACMAN_ACTIONS,
            GameKind::Pong | GameKind::Breakout => &PADDLE_ACTIONS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GameKind::PacMan => "pacman",
            GameKind::Pong => "pong",
            GameKind::Breakout => "breakout",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "pacman" => Some(GameKind::PacMan),
            "pong" => Some(GameKind::Pong),
            "breakout" => Some(GameKind::Breakout),
            _ => None,
        }
    }

    /// Game implied by a built-in layout name (`v*`, `p*`, `b*`).
    pub fn for_builtin(layout: &str) -> Option<Self> {
        match layout.chars().next()? {
            'v' => Some(GameKind::PacMan),
            'p' => Some(GameKind::Pong),
            'b' => Some(GameKind::Breakout),
            _ => None,
        }
    }
}

/// Ball position (interior coordinates) and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ball {
    pub x: i8,
    pub y: i8,
    pub vx: i8,
    pub vy: i8,
}

/// Canonical game configuration.
///
/// PacMan: `agent` and `elements` are grid cell indices. Pong/Breakout:
/// `agent` and `elements` are the leftmost interior column of each paddle.
/// `items` is the bitmask of remaining pellets or bricks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub agent: u16,
    pub elements: SmallVec<[u16; 2]>,
    pub items: u64,
    pub ball: Option<Ball>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    NonTerminal,
    Win,
    Loss,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::NonTerminal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub kind: GameKind,
    pub layout: Arc<LayoutSpec>,
    pub element_policies: Vec<ElementPolicy>,
    pub rewards: RewardSpec,
    pub discount: f64,
    /// Initial ball velocity for Pong/Breakout, components in {-1, 0, 1}.
    pub ball_velocity: (i8, i8),
    item_of_cell: Vec<Option<u8>>,
}

impl GameSpec {
    pub fn new(
        kind: GameKind,
        layout: LayoutSpec,
        element_policies: Vec<ElementPolicy>,
        rewards: RewardSpec,
        discount: f64,
    ) -> Result<Self, GameError> {
        let mut item_of_cell = vec![None; layout.width * layout.height];
        for (i, &c) in layout.item_cells.iter().enumerate() {
            item_of_cell[c] = Some(i as u8);
        }
        let spec = Self {
            kind,
            layout: Arc::new(layout),
            element_policies: element_policies.into_iter().map(ElementPolicy::normalized).collect(),
            rewards,
            discount,
            ball_velocity: (1, -1),
            item_of_cell,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec where every stochastic element follows `policy`.
    pub fn with_uniform_policy(
        kind: GameKind,
        layout: LayoutSpec,
        policy: Option<ElementPolicy>,
        rewards: RewardSpec,
        discount: f64,
    ) -> Result<Self, GameError> {
        let n = match kind {
            GameKind::PacMan => layout.ghost_cells.len(),
            GameKind::Pong => 1,
            GameKind::Breakout => 0,
        };
        let policies = match (n, policy) {
            (0, _) => Vec::new(),
            (n, Some(p)) => vec![p; n],
            (_, None) => {
                return Err(GameError::InvalidSpec(format!(
                    "{} layout needs an element policy",
                    kind.name()
                )))
            }
        };
        Self::new(kind, layout, policies, rewards, discount)
    }

    pub fn with_ball_velocity(mut self, vx: i8, vy: i8) -> Result<Self, GameError> {
        self.ball_velocity = (vx, vy);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), GameError> {
        let bad = |m: String| Err(GameError::LayoutInvalid(format!("{}: {m}", self.layout.name)));
        let spec_bad = |m: String| Err(GameError::InvalidSpec(m));
        let l = &*self.layout;
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return spec_bad(format!("discount {} outside (0, 1]", self.discount));
        }
        self.rewards.validate().map_err(GameError::InvalidSpec)?;
        for (i, p) in self.element_policies.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.p) {
                return spec_bad(format!("element {i}: bias p={} outside [0, 1]", p.p));
            }
            let ok = match self.kind {
                GameKind::PacMan => p.kind.is_ghost(),
                GameKind::Pong => !p.kind.is_ghost(),
                GameKind::Breakout => false,
            };
            if !ok {
                return spec_bad(format!("policy {:?} does not apply to {}", p.kind, self.kind.name()));
            }
        }
        match self.kind {
            GameKind::PacMan => {
                if l.agent_cells.len() != 1 {
                    return bad(format!("expected exactly one PacMan, found {}", l.agent_cells.len()));
                }
                if l.item_cells.is_empty() {
                    return bad("PacMan needs at least one food pellet".into());
                }
                if !l.ball_cells.is_empty() {
                    return bad("PacMan layouts have no ball".into());
                }
                if self.element_policies.len() != l.ghost_cells.len() {
                    return spec_bad(format!(
                        "{} ghosts but {} element policies",
                        l.ghost_cells.len(),
                        self.element_policies.len()
                    ));
                }
            }
            GameKind::Pong | GameKind::Breakout => {
                let (w, h) = l.interior();
                if l.has_interior_walls() {
                    return bad("paddle games cannot have interior walls".into());
                }
                if l.ball_cells.len() != 1 {
                    return bad(format!("expected exactly one ball, found {}", l.ball_cells.len()));
                }
                if w < 2 || h < 3 {
                    return bad("field is too small".into());
                }
                self.check_paddle(&l.agent_cells, l.height - 2, "agent paddle")?;
                let (vx, vy) = self.ball_velocity;
                if !(-1..=1).contains(&vx) || !matches!(vy, -1 | 1) {
                    return spec_bad(format!("ball velocity ({vx},{vy}) must have vx in {{-1,0,1}} and vy in {{-1,1}}"));
                }
                let (br, _) = l.row_col(l.ball_cells[0]);
                if br == l.height - 2 {
                    return bad("ball cannot start on the agent paddle row".into());
                }
                if self.kind == GameKind::Pong {
                    if !l.item_cells.is_empty() {
                        return bad("Pong layouts have no bricks".into());
                    }
                    self.check_paddle(&l.ghost_cells, 1, "computer paddle")?;
                    if br == 1 {
                        return bad("ball cannot start on the computer paddle row".into());
                    }
                    if self.element_policies.len() != 1 {
                        return spec_bad("Pong needs exactly one computer-paddle policy".into());
                    }
                } else {
                    if l.item_cells.is_empty() {
                        return bad("Breakout needs at least one brick".into());
                    }
                    if !l.ghost_cells.is_empty() {
                        return bad("Breakout has no computer paddle".into());
                    }
                    if l.item_cells.iter().any(|&c| l.row_col(c).0 == l.height - 2) {
                        return bad("bricks cannot sit on the paddle row".into());
                    }
                    if !self.element_policies.is_empty() {
                        return spec_bad("Breakout has no stochastic elements".into());
                    }
                }
            }
        }
        Ok(())
    }

    fn check_paddle(&self, cells: &[usize], row: usize, what: &str) -> Result<(), GameError> {
        let l = &*self.layout;
        let bad = |m: String| Err(GameError::LayoutInvalid(format!("{}: {m}", l.name)));
        if cells.is_empty() {
            return bad(format!("missing {what}"));
        }
        if cells.iter().any(|&c| l.row_col(c).0 != row) {
            return bad(format!("{what} must lie on grid row {row}"));
        }
        if cells.windows(2).any(|w| w[1] != w[0] + 1) {
            return bad(format!("{what} cells must be contiguous"));
        }
        if cells.len() >= l.interior().0 {
            return bad(format!("{what} fills the whole row"));
        }
        Ok(())
    }

    /// Stochastic element count (ghosts or computer paddle).
    pub fn element_count(&self) -> usize {
        self.element_policies.len()
    }

    pub fn actions(&self) -> &'static [Action] {
        self.kind.actions()
    }

    /// Neighbour of `cell` in direction `action`, if it is open.
    #[inline]
    pub fn step_cell(&self, cell: usize, action: Action) -> Option<usize> {
        let (dr, dc) = action.delta();
        let (r, c) = self.layout.row_col(cell);
        let target = self
            .layout
            .cell(r.checked_add_signed(dr)?, c.checked_add_signed(dc)?);
        (!self.layout.is_wall(target)).then_some(target)
    }

    #[inline]
    fn item_at(&self, cell: usize) -> Option<u8> {
        self.item_of_cell[cell]
    }

    pub fn initial_configuration(&self) -> Configuration {
        let l = &*self.layout;
        let all_items = if l.item_cells.len() == 64 { u64::MAX } else { (1u64 << l.item_cells.len()) - 1 };
        match self.kind {
            GameKind::PacMan => Configuration {
                agent: l.agent_cells[0] as u16,
                elements: l.ghost_cells.iter().map(|&c| c as u16).collect(),
                items: all_items,
                ball: None,
            },
            GameKind::Pong | GameKind::Breakout => {
                let (br, bc) = l.row_col(l.ball_cells[0]);
                let ball = Ball {
                    x: (bc - 1) as i8,
                    y: (br - 1) as i8,
                    vx: self.ball_velocity.0,
                    vy: self.ball_velocity.1,
                };
                let interior_x = |c: usize| (l.row_col(c).1 - 1) as u16;
                Configuration {
                    agent: interior_x(l.agent_cells[0]),
                    elements: l.ghost_cells.first().map(|&c| interior_x(c)).into_iter().collect(),
                    items: if self.kind == GameKind::Breakout { all_items } else { 0 },
                    ball: Some(ball),
                }
            }
        }
    }

    /// Terminal classification. Loss takes precedence over Win.
    pub fn status(&self, state: &Configuration) -> Status {
        match self.kind {
            GameKind::PacMan => {
                if state.elements.contains(&state.agent) {
                    Status::Loss
                } else if state.items == 0 {
                    Status::Win
                } else {
                    Status::NonTerminal
                }
            }
            GameKind::Pong | GameKind::Breakout => {
                let (_, h) = self.layout.interior();
                let y = state.ball.map_or(0, |b| b.y);
                if y == h as i8 - 1 {
                    Status::Loss
                } else if (self.kind == GameKind::Pong && y == 0)
                    || (self.kind == GameKind::Breakout && state.items == 0)
                {
                    Status::Win
                } else {
                    Status::NonTerminal
                }
            }
        }
    }

    /// Legal agent actions in canonical order; empty for terminal configurations.
    pub fn legal_actions(&self, state: &Configuration) -> SmallVec<[Action; 4]> {
        if self.status(state).is_terminal() {
            return SmallVec::new();
        }
        match self.kind {
            GameKind::PacMan => PACMAN_ACTIONS
                .iter()
                .copied()
                .filter(|&a| self.step_cell(state.agent as usize, a).is_some())
                .collect(),
            GameKind::Pong | GameKind::Breakout => {
                let (w, _) = self.layout.interior();
                let pw = self.layout.agent_cells.len();
                let x = state.agent as usize;
                let mut out = SmallVec::new();
                if x > 0 {
                    out.push(Action::Left);
                }
                if x + pw < w {
                    out.push(Action::Right);
                }
                out.push(Action::Stop);
                out
            }
        }
    }

    /// All successor configurations of `state` under agent `action`, with
    /// their probabilities, in first-appearance order of the joint element
    /// move enumeration (element 0 slowest).
    pub fn successors(
        &self,
        state: &Configuration,
        action: Action,
    ) -> Result<Vec<(Configuration, f64)>, GameError> {
        if !self.legal_actions(state).contains(&action) {
            return Err(GameError::IllegalAction { action });
        }
        let mut mid = state.clone();
        match self.kind {
            GameKind::PacMan => {
                let cell = self
                    .step_cell(state.agent as usize, action)
                    .ok_or(GameError::IllegalAction { action })?;
                mid.agent = cell as u16;
                if let Some(bit) = self.item_at(cell) {
                    mid.items &= !(1u64 << bit);
                }
                if self.status(&mid).is_terminal() {
                    return Ok(vec![(mid, 1.0)]);
                }
            }
            GameKind::Pong | GameKind::Breakout => {
                mid.agent = match action {
                    Action::Left => mid.agent - 1,
                    Action::Right => mid.agent + 1,
                    _ => mid.agent,
                };
            }
        }

        // Joint enumeration over element moves.
        let mut partial: Vec<(SmallVec<[u16; 2]>, f64)> = vec![(SmallVec::new(), 1.0)];
        for e in 0..self.element_count() {
            let dist = element_move_distribution(self, &mid, e)?;
            let from = mid.elements[e];
            let mut next = Vec::with_capacity(partial.len() * dist.len());
            for (prefix, p) in &partial {
                for &(mv, q) in &dist {
                    let pos = self.apply_move(from, mv);
                    let mut v = prefix.clone();
                    v.push(pos);
                    next.push((v, p * q));
                }
            }
            partial = next;
        }

        let mut order: Vec<(Configuration, f64)> = Vec::with_capacity(partial.len());
        let mut seen: HashMap<Configuration, usize> = HashMap::with_capacity(partial.len());
        for (elements, p) in partial {
            let mut next = mid.clone();
            next.elements = elements;
            if let Some(ball) = next.ball {
                let (b, items) = self.advance_ball(ball, next.agent, next.elements.first().copied(), next.items);
                next.ball = Some(b);
                next.items = items;
            }
            match seen.get(&next) {
                Some(&i) => order[i].1 += p,
                None => {
                    seen.insert(next.clone(), order.len());
                    order.push((next, p));
                }
            }
        }
        Ok(order)
    }

    fn apply_move(&self, from: u16, mv: ElementMove) -> u16 {
        match (self.kind, mv) {
            (_, ElementMove::Teleport(c)) => c,
            (GameKind::PacMan, ElementMove::Step(a)) => {
                self.step_cell(from as usize, a).expect("element moves are legal") as u16
            }
            (_, ElementMove::Step(Action::Left)) => from - 1,
            (_, ElementMove::Step(Action::Right)) => from + 1,
            (_, ElementMove::Step(_)) => from,
        }
    }

    /// One tick of ball motion after both paddles have moved.
    ///
    /// Side walls flip `vx`. A ball about to enter a brick, the top wall
    /// (Breakout) or a paddle flips `vy` and stays in place for the tick.
    /// A ball entering an uncovered paddle row ends the game.
    fn advance_ball(&self, ball: Ball, agent_x: u16, opp_x: Option<u16>, items: u64) -> (Ball, u64) {
        let (w, h) = self.layout.interior();
        let (w, h) = (w as i8, h as i8);
        let mut b = ball;
        if b.x + b.vx < 0 || b.x + b.vx >= w {
            b.vx = -b.vx;
        }
        let tx = b.x + b.vx;
        let ty = b.y + b.vy;
        let covers = |left: u16, width: usize| {
            let left = left as i8;
            tx >= left && tx < left + width as i8
        };
        if self.kind == GameKind::Breakout {
            if ty < 0 {
                b.vy = -b.vy;
                return (b, items);
            }
            let cell = self.layout.cell(ty as usize + 1, tx as usize + 1);
            if let Some(bit) = self.item_at(cell) {
                if items & (1 << bit) != 0 {
                    b.vy = -b.vy;
                    return (b, items & !(1 << bit));
                }
            }
        }
        if ty == h - 1 && covers(agent_x, self.layout.agent_cells.len()) {
            b.vy = -b.vy;
            return (b, items);
        }
        if self.kind == GameKind::Pong && ty == 0 {
            if let Some(ox) = opp_x {
                if covers(ox, self.layout.ghost_cells.len()) {
                    b.vy = -b.vy;
                    return (b, items);
                }
            }
        }
        b.x = tx;
        b.y = ty;
        (b, items)
    }

    /// Pellets or bricks consumed between two configurations.
    pub fn items_consumed(before: u64, after: u64) -> u32 {
        (before & !after).count_ones()
    }
}
