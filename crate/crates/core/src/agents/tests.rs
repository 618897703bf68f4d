use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::games::{Configuration, ElementPolicy, GameKind, GameSpec, LayoutSpec, Status};
use crate::mdp::{RewardSpec, StateIndex, TransitionTable};
use crate::noise::{inject_noise, NoiseSpec};
use crate::seed::rng_from;

/// Three states: 0 and 1 have actions Left/Right, 2 is terminal.
/// Right moves 0 -> 1 -> 2; Left from either returns to 0.
fn toy() -> Arc<Mdp> {
    let states: Vec<Configuration> = (0..3)
        .map(|i| Configuration { agent: i, elements: Default::default(), items: 1, ball: None })
        .collect();
    let index = Arc::new(StateIndex::from_states(states).unwrap());
    let table = TransitionTable::from_rows(vec![
        ((0, Action::Left), vec![(0, 1.0)]),
        ((0, Action::Right), vec![(1, 1.0)]),
        ((1, Action::Left), vec![(0, 1.0)]),
        ((1, Action::Right), vec![(2, 1.0)]),
    ]);
    let both = vec![Action::Left, Action::Right];
    Arc::new(Mdp::from_parts(
        GameKind::PacMan,
        index,
        vec![both.clone(), both, vec![]],
        table,
        RewardSpec::PACMAN,
        0.9,
        vec![Status::NonTerminal, Status::NonTerminal, Status::Win],
    ))
}

fn pair(m: &Mdp, s: u32, a: Action) -> usize {
    m.pair(s, a).unwrap()
}

fn cfg(algorithm: Algorithm) -> AgentConfig {
    AgentConfig { algorithm, ..AgentConfig::default() }
}

fn builtin_mdp(name: &str) -> Arc<Mdp> {
    let g = GameSpec::with_uniform_policy(
        GameKind::PacMan,
        LayoutSpec::builtin(name).unwrap(),
        Some(ElementPolicy::random_ghost()),
        RewardSpec::PACMAN,
        0.9,
    )
    .unwrap();
    Arc::new(Mdp::build(&g).unwrap())
}

#[test]
fn updates_at_fixed_point_stay_zero() {
    let m = toy();
    let mut q = QTable::new(&m);
    q_update(&mut q, &m, 0, Action::Right, 0.0, 1, &cfg(Algorithm::QLearning)).unwrap();
    sarsa_update(&mut q, &m, 0, Action::Right, 0.0, 1, Some(Action::Left), &cfg(Algorithm::Sarsa)).unwrap();
    assert!(q.values().iter().all(|&v| v == 0.0));
}

#[test]
fn q_update_hand_values() {
    let m = toy();
    let c = cfg(Algorithm::QLearning);
    let mut q = QTable::new(&m);
    q.set(pair(&m, 1, Action::Left), 2.0);
    q.set(pair(&m, 1, Action::Right), -5.0);
    q_update(&mut q, &m, 0, Action::Right, 10.0, 1, &c).unwrap();
    assert_eq!(q.get(pair(&m, 0, Action::Right)), 0.05 * (10.0 + 0.9 * 2.0));
    assert!((q.get(pair(&m, 0, Action::Right)) - 0.59).abs() < 1e-12);

    q.set(pair(&m, 1, Action::Right), 1.0);
    q_update(&mut q, &m, 1, Action::Right, -200.0, 2, &c).unwrap();
    assert_eq!(q.get(pair(&m, 1, Action::Right)), 1.0 + 0.05 * (-200.0 - 1.0));
    assert!((q.get(pair(&m, 1, Action::Right)) + 9.05).abs() < 1e-12);
}

#[test]
fn sarsa_hand_values() {
    let m = toy();
    let c = cfg(Algorithm::Sarsa);
    let mut q = QTable::new(&m);
    q.set(pair(&m, 1, Action::Left), 2.0);
    q.set(pair(&m, 1, Action::Right), -5.0);
    sarsa_update(&mut q, &m, 0, Action::Right, 10.0, 1, Some(Action::Left), &c).unwrap();
    assert!((q.get(pair(&m, 0, Action::Right)) - 0.59).abs() < 1e-12);

    q.set(pair(&m, 0, Action::Right), 0.0);
    sarsa_update(&mut q, &m, 0, Action::Right, 10.0, 1, Some(Action::Right), &c).unwrap();
    let sarsa = q.get(pair(&m, 0, Action::Right));
    assert!((sarsa - 0.275).abs() < 1e-12);

    let mut q2 = q.clone();
    q2.set(pair(&m, 0, Action::Right), 0.0);
    q_update(&mut q2, &m, 0, Action::Right, 10.0, 1, &c).unwrap();
    assert_ne!(q2.get(pair(&m, 0, Action::Right)), sarsa);
}

#[test]
fn illegal_actions_are_rejected() {
    let m = toy();
    let mut q = QTable::new(&m);
    let c = cfg(Algorithm::QLearning);
    assert_eq!(
        q_update(&mut q, &m, 0, Action::Up, 1.0, 1, &c),
        Err(AgentError::IllegalAction { state: 0, action: Action::Up })
    );
    assert!(sarsa_update(&mut q, &m, 0, Action::Right, 1.0, 1, Some(Action::Down), &c).is_err());
    // Terminal successor: next action is not needed.
    sarsa_update(&mut q, &m, 1, Action::Right, 1.0, 2, None, &c).unwrap();
}

#[test]
fn boltzmann_hand_value_and_stability() {
    let m = toy();
    let mut q = QTable::new(&m);
    let p = boltzmann_probs(&q, &m, 0, 1.5);
    assert_eq!(p.as_slice(), &[0.5, 0.5]);
    q.set(pair(&m, 0, Action::Left), 1.0);
    let p = boltzmann_probs(&q, &m, 0, 1.5);
    let e = (2.0f64 / 3.0).exp();
    assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
    assert!((p[0] - 0.6607).abs() < 1e-4);
    assert!((p[1] - 0.3393).abs() < 1e-4);
    q.set(pair(&m, 0, Action::Left), 1000.0);
    let p = boltzmann_probs(&q, &m, 0, 1.5);
    assert!(p.iter().all(|x| x.is_finite()));
    assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-12);
}

#[test]
fn boltzmann_temperature_limits() {
    let m = toy();
    let mut q = QTable::new(&m);
    q.set(pair(&m, 0, Action::Right), 0.3);
    let cold = boltzmann_probs(&q, &m, 0, 1e-6);
    assert!(cold[1] >= 1.0 - 1e-6);
    let hot = boltzmann_probs(&q, &m, 0, 1e6);
    assert!((hot[0] - 0.5).abs() < 1e-6 && (hot[1] - 0.5).abs() < 1e-6);
}

#[test]
fn boltzmann_sampling_matches_probs() {
    let m = toy();
    let mut q = QTable::new(&m);
    q.set(pair(&m, 0, Action::Left), 1.0);
    let mut rng = rng_from(5);
    let n = 20_000;
    let left = (0..n).filter(|_| boltzmann_select(&q, &m, 0, 1.5, &mut rng) == Action::Left).count();
    let p = boltzmann_probs(&q, &m, 0, 1.5)[0];
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    assert!((left as f64 / n as f64 - p).abs() < 4.0 * sd);
}

#[test]
fn epsilon_greedy_cases() {
    let m = toy();
    let mut q = QTable::new(&m);
    let mut rng = rng_from(1);
    let n = 10_000;
    let sd = (0.25 / n as f64).sqrt();

    // Tie at epsilon 0: uniform.
    let left = (0..n).filter(|_| epsilon_greedy_select(&q, &m, 0, 0.0, &mut rng) == Action::Left).count();
    assert!((left as f64 / n as f64 - 0.5).abs() < 3.0 * sd);

    q.set(pair(&m, 0, Action::Right), 1.0);
    assert!((0..1000).all(|_| epsilon_greedy_select(&q, &m, 0, 0.0, &mut rng) == Action::Right));

    let left = (0..n).filter(|_| epsilon_greedy_select(&q, &m, 0, 1.0, &mut rng) == Action::Left).count();
    assert!((left as f64 / n as f64 - 0.5).abs() < 3.0 * sd);

    // epsilon 0.2 with a unique maximizer: Left only through the random branch.
    let left = (0..n).filter(|_| epsilon_greedy_select(&q, &m, 0, 0.2, &mut rng) == Action::Left).count();
    let sd = (0.1 * 0.9 / n as f64).sqrt();
    assert!((left as f64 / n as f64 - 0.1).abs() < 3.0 * sd);
}

#[test]
fn corridor_return_is_exact() {
    let layout = LayoutSpec::parse("c", "%%%%%\n%P..%\n%%%%%\n").unwrap();
    let g = GameSpec::with_uniform_policy(GameKind::PacMan, layout, None, RewardSpec::PACMAN, 0.9).unwrap();
    let m = Arc::new(Mdp::build(&g).unwrap());
    let mut q = QTable::new(&m);
    for p in 0..m.pair_count() {
        if m.pair_key(p).1 == Action::Right {
            q.set(p, 1e6);
        }
    }
    let c = AgentConfig { exploration: Exploration::EpsilonGreedy { epsilon: 0.0 }, ..AgentConfig::default() };
    let mut env = TableEnv::new(m.clone(), 0);
    let ret = run_training_episode(&mut env, &mut q, &c, 100, &mut rng_from(0)).unwrap();
    assert_eq!(ret, -2.0 + 2.0 * 20.0 + 500.0);
    assert_eq!(q.visited.count(), 2);
    let eval = evaluate(&mut env, &q, &c, EvalPolicy::Greedy, 3, 100, &mut rng_from(0)).unwrap();
    assert_eq!(eval, ret);
}

#[test]
fn zero_max_steps_leaves_table_untouched() {
    let m = builtin_mdp("v2");
    let mut q = QTable::new(&m);
    let mut env = TableEnv::new(m.clone(), 0);
    let ret = run_training_episode(&mut env, &mut q, &AgentConfig::default(), 0, &mut rng_from(0)).unwrap();
    assert_eq!(ret, 0.0);
    assert_eq!(q, QTable::new(&m));
}

#[test]
fn visited_pairs_are_legal_and_evaluation_records_nothing() {
    let m = builtin_mdp("v2");
    let mut q = QTable::new(&m);
    let mut env = TableEnv::new(m.clone(), 3);
    let c = AgentConfig::default();
    let mut rng = rng_from(3);
    run_training_episode(&mut env, &mut q, &c, DEFAULT_MAX_STEPS, &mut rng).unwrap();
    assert!(!q.visited.is_empty());
    assert!(q.visited.iter().all(|p| p < m.pair_count()));
    let before = q.clone();
    let zero = QTable::new(&m);
    let mean = evaluate(&mut env, &zero, &c, EvalPolicy::Greedy, 10, DEFAULT_MAX_STEPS, &mut rng).unwrap();
    assert!(mean.is_finite());
    evaluate(&mut env, &q, &c, EvalPolicy::Exploration, 5, DEFAULT_MAX_STEPS, &mut rng).unwrap();
    assert_eq!(q, before);
}

#[test]
fn training_is_reproducible() {
    let m = builtin_mdp("v2");
    let c = AgentConfig {
        algorithm: Algorithm::QLearning,
        exploration: Exploration::Boltzmann { temperature: 1.5 },
        ..AgentConfig::default()
    };
    let train = |noise: bool| {
        let mut q = QTable::new(&m);
        let mut rng = rng_from(17);
        if noise {
            let mut env = NoisyEnv::new(m.clone(), NoiseSpec::new(0.1, 4), 9).unwrap();
            for _ in 0..20 {
                run_training_episode(&mut env, &mut q, &c, DEFAULT_MAX_STEPS, &mut rng).unwrap();
            }
        } else {
            let mut env = TableEnv::new(m.clone(), 9);
            for _ in 0..20 {
                run_training_episode(&mut env, &mut q, &c, DEFAULT_MAX_STEPS, &mut rng).unwrap();
            }
        }
        q
    };
    for noise in [false, true] {
        let (a, b) = (train(noise), train(noise));
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.visited, b.visited);
    }
}

#[test]
fn lazy_noisy_env_matches_eager_table() {
    // Episode 0 of a resampling environment uses the same rows as the
    // initial injection; with the same sampling stream the trajectories agree.
    let m = builtin_mdp("v2");
    let noise = NoiseSpec::new(0.5, 21);
    let eager = inject_noise(m.clone(), noise).unwrap();
    let mut table_env = TableEnv::with_table(m.clone(), Arc::new(eager.perturbed), 8).unwrap();
    let mut lazy = NoisyEnv::new(m.clone(), noise, 8).unwrap();
    let q = QTable::new(&m);
    let c = AgentConfig::default();
    let (mut r1, mut r2) = (rng_from(2), rng_from(2));
    let (mut s1, mut s2) = (table_env.reset(), lazy.reset());
    for _ in 0..300 {
        if m.is_terminal(s1) {
            break;
        }
        let a1 = explore_select(&q, &m, s1, c.exploration, &mut r1);
        let a2 = explore_select(&q, &m, s2, c.exploration, &mut r2);
        assert_eq!(a1, a2);
        let (x, y) = (table_env.step(s1, a1).unwrap(), lazy.step(s2, a2).unwrap());
        assert_eq!(x, y);
        s1 = x.next;
        s2 = y.next;
    }
}

#[test]
fn misaligned_tables_are_rejected() {
    let m = toy();
    let t = TransitionTable::from_rows(vec![((0, Action::Left), vec![(0, 1.0)])]);
    assert_eq!(TableEnv::with_table(m, Arc::new(t), 0).unwrap_err(), AgentError::MisalignedTable);
}

#[test]
fn invalid_configs_are_rejected() {
    let c = AgentConfig { alpha: 0.0, ..AgentConfig::default() };
    assert!(c.validate().is_err());
    let c = AgentConfig { exploration: Exploration::Boltzmann { temperature: 0.0 }, ..AgentConfig::default() };
    assert!(c.validate().is_err());
    let c = AgentConfig { exploration: Exploration::EpsilonGreedy { epsilon: 1.5 }, ..AgentConfig::default() };
    assert!(c.validate().is_err());
    assert!(AgentConfig::default().validate().is_ok());
}

proptest! {
    #[test]
    fn rules_agree_on_greedy_next_action(values in prop::collection::vec(-50.0f64..50.0, 4), r in -10.0f64..10.0) {
        let m = toy();
        let mut q = QTable::new(&m);
        for (p, v) in values.iter().enumerate() {
            q.set(p, *v);
        }
        let greedy = if q.get(pair(&m, 1, Action::Left)) >= q.get(pair(&m, 1, Action::Right)) {
            Action::Left
        } else {
            Action::Right
        };
        let mut a = q.clone();
        let mut b = q.clone();
        q_update(&mut a, &m, 0, Action::Right, r, 1, &cfg(Algorithm::QLearning)).unwrap();
        sarsa_update(&mut b, &m, 0, Action::Right, r, 1, Some(greedy), &cfg(Algorithm::Sarsa)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn boltzmann_sums_to_one(a in -1e3f64..1e3, b in -1e3f64..1e3, t in 1e-3f64..1e3) {
        let m = toy();
        let mut q = QTable::new(&m);
        q.set(0, a);
        q.set(1, b);
        let p = boltzmann_probs(&q, &m, 0, t);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_values_stay_bounded(seed in any::<u64>(), steps in 100usize..3000) {
        let m = toy();
        let r_max = 50.0;
        let c = AgentConfig { alpha: 0.5, ..cfg(Algorithm::QLearning) };
        let mut q = QTable::new(&m);
        let mut rng = rng_from(seed);
        let mut s = 0u32;
        for _ in 0..steps {
            let a = if rng.random::<bool>() { Action::Left } else { Action::Right };
            let next = match (s, a) {
                (_, Action::Left) => 0,
                (0, _) => 1,
                _ => 2,
            };
            let r = rng.random_range(-r_max..=r_max);
            q_update(&mut q, &m, s, a, r, next, &c).unwrap();
            s = if next == 2 { 0 } else { next };
        }
        let bound = r_max / (1.0 - 0.9) + r_max;
        prop_assert!(q.values().iter().all(|v| v.abs() <= bound));
    }
}
