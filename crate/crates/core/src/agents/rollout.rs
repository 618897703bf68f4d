use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{explore_select, greedy_select, q_update, sarsa_update, AgentConfig, AgentError, Algorithm, Environment, QTable};

/// Per-episode step cap; truncated episodes bootstrap normally.
pub const DEFAULT_MAX_STEPS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    /// Exploitation only, ties broken uniformly.
    #[default]
    Greedy,
    /// The agent's training exploration policy.
    Exploration,
}

/// One training episode with online updates. Returns the undiscounted return.
pub fn run_training_episode<E: Environment>(
    env: &mut E,
    q: &mut QTable,
    cfg: &AgentConfig,
    max_steps: usize,
    rng: &mut impl Rng,
) -> Result<f64, AgentError> {
    if max_steps == 0 {
        return Ok(0.0);
    }
    let mut s = env.reset();
    if env.mdp().is_terminal(s) {
        return Ok(0.0);
    }
    let mut a = explore_select(q, env.mdp(), s, cfg.exploration, rng);
    let mut ret = 0.0;
    for _ in 0..max_steps {
        let pair = env.mdp().pair(s, a).ok_or(AgentError::IllegalAction { state: s, action: a })?;
        q.visited.insert(pair);
        let step = env.step(s, a)?;
        ret += step.reward;
        let mdp = env.mdp();
        if step.terminal {
            match cfg.algorithm {
                Algorithm::QLearning => q_update(q, mdp, s, a, step.reward, step.next, cfg)?,
                Algorithm::Sarsa => sarsa_update(q, mdp, s, a, step.reward, step.next, None, cfg)?,
            }
            break;
        }
        let a_next = match cfg.algorithm {
            Algorithm::QLearning => {
                q_update(q, mdp, s, a, step.reward, step.next, cfg)?;
                explore_select(q, mdp, step.next, cfg.exploration, rng)
            }
            Algorithm::Sarsa => {
                let a_next = explore_select(q, mdp, step.next, cfg.exploration, rng);
                sarsa_update(q, mdp, s, a, step.reward, step.next, Some(a_next), cfg)?;
                a_next
            }
        };
        s = step.next;
        a = a_next;
    }
    Ok(ret)
}

/// Mean undiscounted return of `episodes` rollouts without learning or
/// visit recording.
pub fn evaluate<E: Environment>(
    env: &mut E,
    q: &QTable,
    cfg: &AgentConfig,
    policy: EvalPolicy,
    episodes: usize,
    max_steps: usize,
    rng: &mut impl Rng,
) -> Result<f64, AgentError> {
    assert!(episodes >= 1, "evaluation needs at least one episode");
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset();
        let mut ret = 0.0;
        for _ in 0..max_steps {
            if env.mdp().is_terminal(s) {
                break;
            }
            let a = match policy {
                EvalPolicy::Greedy => greedy_select(q, env.mdp(), s, rng),
                EvalPolicy::Exploration => explore_select(q, env.mdp(), s, cfg.exploration, rng),
            };
            let step = env.step(s, a)?;
            ret += step.reward;
            s = step.next;
        }
        total += ret;
    }
    Ok(total / episodes as f64)
}
