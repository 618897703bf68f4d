//! Move distributions of the stochastic game elements (ghosts, computer paddle).

use serde::{Deserialize, Serialize};

use super::{Action, Configuration, GameError, GameSpec, PACMAN_ACTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Uniform over legal moves.
    RandomGhost,
    /// Biased toward moves that shrink the Manhattan distance to PacMan.
    #[serde(alias = "following_ghost")]
    DirectionalGhost,
    /// Teleports with probability `p`, otherwise moves like a random ghost.
    TeleportingGhost,
    RandomPaddle,
    /// Tracks the ball's column with probability `p`.
    FollowingPaddle,
}

impl PolicyKind {
    pub fn is_ghost(self) -> bool {
        matches!(
            self,
            PolicyKind::RandomGhost | PolicyKind::DirectionalGhost | PolicyKind::TeleportingGhost
        )
    }

    pub fn uses_bias(self) -> bool {
        matches!(
            self,
            PolicyKind::DirectionalGhost | PolicyKind::TeleportingGhost | PolicyKind::FollowingPaddle
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementPolicy {
    pub kind: PolicyKind,
    /// Bias probability; ignored by the random kinds.
    #[serde(default)]
    pub p: f64,
    /// Restrict teleport targets to open cells next to a wall.
    #[serde(default)]
    pub near_walls: bool,
}

impl ElementPolicy {
    pub const fn random_ghost() -> Self {
        Self { kind: PolicyKind::RandomGhost, p: 0.0, near_walls: false }
    }

    pub const fn directional_ghost(p: f64) -> Self {
        Self { kind: PolicyKind::DirectionalGhost, p, near_walls: false }
    }

    pub const fn teleporting_ghost(p: f64) -> Self {
        Self { kind: PolicyKind::TeleportingGhost, p, near_walls: false }
    }

    pub const fn random_paddle() -> Self {
        Self { kind: PolicyKind::RandomPaddle, p: 0.0, near_walls: false }
    }

    pub const fn following_paddle(p: f64) -> Self {
        Self { kind: PolicyKind::FollowingPaddle, p, near_walls: false }
    }

    /// Canonical policy with unused fields zeroed, so equal dynamics compare equal.
    pub fn normalized(self) -> Self {
        Self {
            kind: self.kind,
            p: if self.kind.uses_bias() { self.p } else { 0.0 },
            near_walls: self.kind == PolicyKind::TeleportingGhost && self.near_walls,
        }
    }

    /// Short human-readable label, e.g. `TeleportingGhost(p=0.5)`.
    pub fn label(&self) -> String {
        let name = match self.kind {
            PolicyKind::RandomGhost => "RandomGhost",
            PolicyKind::DirectionalGhost => "DirectionalGhost",
            PolicyKind::TeleportingGhost if self.near_walls => "TeleportingNearWallsGhost",
            PolicyKind::TeleportingGhost => "TeleportingGhost",
            PolicyKind::RandomPaddle => "RandomPaddle",
            PolicyKind::FollowingPaddle => "FollowingPaddle",
        };
        if self.kind.uses_bias() {
            format!("{name}(p={})", self.p)
        } else {
            name.to_string()
        }
    }
}

/// One move of a stochastic element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementMove {
    Step(Action),
    Teleport(u16),
}

fn manhattan(spec: &GameSpec, a: usize, b: usize) -> usize {
    let (ra, ca) = spec.layout.row_col(a);
    let (rb, cb) = spec.layout.row_col(b);
    ra.abs_diff(rb) + ca.abs_diff(cb)
}

fn uniform(moves: &[ElementMove], mass: f64, out: &mut Vec<(ElementMove, f64)>) {
    let each = mass / moves.len() as f64;
    out.extend(moves.iter().map(|&m| (m, each)));
}

/// Distribution over the next move of stochastic element `element` in `state`.
///
/// For ghosts `state.agent` is PacMan's position after its own move this tick.
/// Zero-probability moves are omitted; the result sums to one.
pub fn element_move_distribution(
    spec: &GameSpec,
    state: &Configuration,
    element: usize,
) -> Result<Vec<(ElementMove, f64)>, GameError> {
    let policy = spec
        .element_policies
        .get(element)
        .ok_or(GameError::NoSuchElement(element))?;
    let pos = *state.elements.get(element).ok_or(GameError::NoSuchElement(element))?;
    let mut out = Vec::new();

    if policy.kind.is_ghost() {
        let pos = pos as usize;
        let walk: Vec<ElementMove> = PACMAN_ACTIONS
            .iter()
            .filter(|&&a| spec.step_cell(pos, a).is_some())
            .map(|&a| ElementMove::Step(a))
            .collect();
        match policy.kind {
            PolicyKind::RandomGhost => {
                if walk.is_empty() {
                    return Err(GameError::NoLegalMove { element });
                }
                uniform(&walk, 1.0, &mut out);
            }
            PolicyKind::DirectionalGhost => {
                if walk.is_empty() {
                    return Err(GameError::NoLegalMove { element });
                }
                let agent = state.agent as usize;
                let d0 = manhattan(spec, pos, agent);
                let (toward, rest): (Vec<_>, Vec<_>) = walk.iter().partition(|m| match m {
                    ElementMove::Step(a) => {
                        manhattan(spec, spec.step_cell(pos, *a).unwrap(), agent) < d0
                    }
                    ElementMove::Teleport(_) => false,
                });
                if toward.is_empty() || rest.is_empty() {
                    uniform(&walk, 1.0, &mut out);
                } else {
                    uniform(&toward, policy.p, &mut out);
                    uniform(&rest, 1.0 - policy.p, &mut out);
                }
            }
            PolicyKind::TeleportingGhost => {
                let p = policy.p;
                let targets: Vec<ElementMove> = if p > 0.0 {
                    let agent = state.agent as usize;
                    let cells: Vec<usize> = if policy.near_walls {
                        spec.layout.wall_adjacent_cells().collect()
                    } else {
                        spec.layout.open_cells().collect()
                    };
                    cells
                        .into_iter()
                        .filter(|&c| c != agent)
                        .map(|c| ElementMove::Teleport(c as u16))
                        .collect()
                } else {
                    Vec::new()
                };
                match (walk.is_empty(), targets.is_empty()) {
                    (true, true) => return Err(GameError::NoLegalMove { element }),
                    (false, true) => uniform(&walk, 1.0, &mut out),
                    (true, false) => uniform(&targets, 1.0, &mut out),
                    (false, false) => {
                        uniform(&walk, 1.0 - p, &mut out);
                        uniform(&targets, p, &mut out);
                    }
                }
            }
            _ => unreachable!(),
        }
    } else {
        let (width, _) = spec.layout.interior();
        let w = spec.layout.ghost_cells.len();
        let x = pos as usize;
        let mut legal = Vec::with_capacity(3);
        if x > 0 {
            legal.push(Action::Left);
        }
        if x + w < width {
            legal.push(Action::Right);
        }
        legal.push(Action::Stop);
        let legal: Vec<ElementMove> = legal.into_iter().map(ElementMove::Step).collect();
        match policy.kind {
            PolicyKind::RandomPaddle => uniform(&legal, 1.0, &mut out),
            PolicyKind::FollowingPaddle => {
                let ball = state.ball.ok_or(GameError::NoSuchElement(element))?;
                let bx = ball.x as usize;
                let toward = if bx < x {
                    Action::Left
                } else if bx >= x + w {
                    Action::Right
                } else {
                    Action::Stop
                };
                let each = (1.0 - policy.p) / legal.len() as f64;
                for m in &legal {
                    let bias = if *m == ElementMove::Step(toward) { policy.p } else { 0.0 };
                    out.push((*m, bias + each));
                }
            }
            _ => unreachable!(),
        }
    }
    out.retain(|&(_, prob)| prob > 0.0);
    if out.is_empty() {
        return Err(GameError::NoLegalMove { element });
    }
    Ok(out)
}
