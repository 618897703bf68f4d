use super::{MdpError, StateIndex, TransitionTable};
use crate::games::GameSpec;

/// Default cap on the number of enumerated states.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// Breadth-first enumeration of every configuration reachable from the
/// initial one. Children are visited in canonical action order, then in the
/// joint element-move order of [`GameSpec::successors`].
pub fn enumerate_states(game: &GameSpec) -> Result<StateIndex, MdpError> {
    enumerate_states_joint(&[game], DEFAULT_STATE_CAP)
}

/// Enumeration over the union of several games' dynamics.
///
/// All games must share kind and grid; the resulting index contains every
/// configuration reachable under any of them, so tables built from each game
/// over this index are directly comparable.
pub fn enumerate_states_joint(games: &[&GameSpec], cap: usize) -> Result<StateIndex, MdpError> {
    let first = games
        .first()
        .ok_or_else(|| MdpError::IncompatibleGames("no games given".into()))?;
    for g in &games[1..] {
        if g.kind != first.kind {
            return Err(MdpError::IncompatibleGames(format!(
                "{} vs {}",
                first.kind.name(),
                g.kind.name()
            )));
        }
        if !g.layout.same_grid(&first.layout) {
            return Err(MdpError::IncompatibleGames(format!(
                "layouts '{}' and '{}' differ",
                first.layout.name, g.layout.name
            )));
        }
        if g.ball_velocity != first.ball_velocity {
            return Err(MdpError::IncompatibleGames("initial ball velocities differ".into()));
        }
    }
    let mut index = StateIndex::default();
    index.push(first.initial_configuration());
    let mut cursor = 0;
    while cursor < index.count() {
        let state = index.state(cursor as u32).clone();
        cursor += 1;
        for g in games {
            for action in g.legal_actions(&state) {
                for (next, _) in g.successors(&state, action)? {
                    if index.id_of(&next).is_none() {
                        if index.count() >= cap {
                            return Err(MdpError::StateSpaceOverflow { cap });
                        }
                        index.push(next);
                    }
                }
            }
        }
    }
    Ok(index)
}

/// Exact transition table of `game` over `index`; rows sorted by successor id.
pub fn build_transition_table(game: &GameSpec, index: &StateIndex) -> Result<TransitionTable, MdpError> {
    let mut table = TransitionTable::with_capacity(index.count() * game.actions().len(), index.count() * 4);
    let mut row = Vec::new();
    for (s, state) in index.states().iter().enumerate() {
        let s = s as u32;
        for action in game.legal_actions(state) {
            row.clear();
            for (next, p) in game.successors(state, action)? {
                let id = index
                    .id_of(&next)
                    .ok_or(MdpError::InconsistentIndex { state: s, action })?;
                row.push((id, p));
            }
            row.sort_unstable_by_key(|&(id, _)| id);
            table.push_row((s, action), row.iter().copied());
        }
    }
    Ok(table)
}
