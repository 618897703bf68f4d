use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::games::{Configuration, ElementPolicy, GameKind, GameSpec, LayoutSpec, Status};
use crate::mdp::{validate_mdp, RewardSpec, StateIndex};

fn v2() -> Arc<Mdp> {
    let g = GameSpec::with_uniform_policy(
        GameKind::PacMan,
        LayoutSpec::builtin("v2").unwrap(),
        Some(ElementPolicy::random_ghost()),
        RewardSpec::PACMAN,
        0.9,
    )
    .unwrap();
    Arc::new(Mdp::build(&g).unwrap())
}

/// Chain MDP with `n` states: from state i, the single action moves to i+1
/// w.p. 0.7 and stays w.p. 0.3; the last state is terminal.
fn chain(n: usize) -> Arc<Mdp> {
    let states: Vec<Configuration> = (0..n)
        .map(|i| Configuration { agent: i as u16, elements: Default::default(), items: 1, ball: None })
        .collect();
    let index = Arc::new(StateIndex::from_states(states).unwrap());
    let rows = (0..n as u32 - 1).map(|i| ((i, Action::Right), vec![(i, 0.3), (i + 1, 0.7)]));
    let table = TransitionTable::from_rows(rows.collect::<Vec<_>>());
    let legal = (0..n).map(|i| if i + 1 < n { vec![Action::Right] } else { vec![] }).collect();
    let status = (0..n).map(|i| if i + 1 < n { Status::NonTerminal } else { Status::Win }).collect();
    Arc::new(Mdp::from_parts(GameKind::PacMan, index, legal, table, RewardSpec::PACMAN, 0.9, status))
}

#[test]
fn zero_std_is_bitwise_identity() {
    let m = v2();
    let d = inject_noise(m.clone(), NoiseSpec::new(0.0, 7)).unwrap();
    let base = m.transitions();
    assert_eq!(d.perturbed.keys(), base.keys());
    for r in 0..base.row_count() {
        let (sa, pa) = base.row(r);
        let (sb, pb) = d.perturbed.row(r);
        assert_eq!(sa, sb);
        assert!(pa.iter().zip(pb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let again = resample(&d, 12345);
    assert_eq!(&again.perturbed, base);
}

#[test]
fn hand_example_two_states_clamps() {
    let mut deltas = vec![0.1, -0.05];
    let mut out = Vec::new();
    assert!(apply_deltas(&[0], &[1.0], &mut deltas, &mut out));
    assert_eq!(out, vec![(0, 1.0)]);
}

#[test]
fn hand_example_three_states_opens_new_transitions() {
    let mut deltas = vec![0.0, 0.3, 0.6];
    let mut out = Vec::new();
    assert!(apply_deltas(&[0], &[1.0], &mut deltas, &mut out));
    let expected = [3.0 / 3.9, 0.3 / 3.9, 0.6 / 3.9];
    assert_eq!(out.len(), 3);
    for ((j, p), e) in out.iter().zip(expected) {
        assert!((p - e).abs() < 1e-15, "successor {j}");
    }
    assert!((out[0].1 - 0.769).abs() < 5e-4);
    assert!((out[1].1 - 0.077).abs() < 5e-4);
    assert!((out[2].1 - 0.154).abs() < 5e-4);
}

#[test]
fn all_negative_draws_are_degenerate() {
    let mut deltas = vec![-5.0, -1.0];
    let mut out = Vec::new();
    assert!(!apply_deltas(&[0], &[1.0], &mut deltas, &mut out));
    assert!(out.is_empty());
}

#[test]
fn degenerate_rows_fall_back_to_base() {
    // std huge relative to n = 2: some rows clamp to zero entirely.
    let m = chain(2);
    let mut seen_fallback = false;
    for seed in 0..200 {
        let d = inject_noise(m.clone(), NoiseSpec::new(50.0, seed)).unwrap();
        if !d.degenerate_rows.is_empty() {
            seen_fallback = true;
            assert_eq!(d.perturbed.row(0), m.transitions().row(0));
        }
        let report = validate_mdp(&d.to_mdp()).structural();
        assert!(report.is_empty(), "{report}");
    }
    assert!(seen_fallback);
}

#[test]
fn perturbed_rows_are_stochastic_at_presets() {
    let m = v2();
    for std in [0.0, 0.1, 0.5, 1.0] {
        for seed in 0..5 {
            let d = inject_noise(m.clone(), NoiseSpec::new(std, seed)).unwrap();
            let report = validate_mdp(&d.to_mdp()).structural();
            assert!(report.is_empty(), "std {std}: {report}");
        }
    }
}

#[test]
fn injection_is_deterministic_and_seeded() {
    let m = chain(10);
    let spec = NoiseSpec::new(0.5, 3);
    let a = inject_noise(m.clone(), spec).unwrap();
    let b = inject_noise(m.clone(), spec).unwrap();
    assert_eq!(a.perturbed, b.perturbed);
    let r1 = resample(&a, 1);
    let r1b = resample(&a, 1);
    let r2 = resample(&a, 2);
    assert_eq!(r1.perturbed, r1b.perturbed);
    assert_ne!(r1.perturbed, r2.perturbed);
    assert_eq!(r1.realized_seed, 1);
}

#[test]
fn frozen_noise_does_not_resample() {
    let m = chain(10);
    let mut spec = NoiseSpec::new(0.5, 3);
    spec.resample_per_episode = false;
    let a = inject_noise(m, spec).unwrap();
    assert_eq!(resample(&a, 99).perturbed, a.perturbed);
}

#[test]
fn distance_examples() {
    let a = TransitionTable::from_rows(vec![((0, Action::Right), vec![(0, 1.0)])]);
    let b = TransitionTable::from_rows(vec![((0, Action::Right), vec![(1, 1.0)])]);
    assert_eq!(table_distance(&a, &a).unwrap(), 0.0);
    assert_eq!(table_distance(&a, &b).unwrap(), 1.0);
    let c = TransitionTable::from_rows(vec![((0, Action::Left), vec![(0, 1.0)])]);
    assert!(matches!(table_distance(&a, &c), Err(NoiseError::ShapeMismatch(_))));
}

#[test]
fn distance_grows_with_std() {
    let m = v2();
    let (mut lo, mut hi) = (0.0, 0.0);
    for seed in 0..20 {
        lo += table_distance(m.transitions(), &inject_noise(m.clone(), NoiseSpec::new(0.1, seed)).unwrap().perturbed)
            .unwrap();
        hi += table_distance(m.transitions(), &inject_noise(m.clone(), NoiseSpec::new(0.5, seed)).unwrap().perturbed)
            .unwrap();
    }
    assert!(hi > lo, "{hi} <= {lo}");
    assert!(lo > 0.0);
}

#[test]
fn legal_share_perturbation_shrinks_with_state_count() {
    // Noise is scaled by |S|, so the split between the two legal successors
    // moves less on bigger state spaces.
    let mean_dev = |n: usize| {
        let m = chain(n);
        let mut total = 0.0;
        for seed in 0..200 {
            let d = inject_noise(m.clone(), NoiseSpec::new(0.5, seed)).unwrap();
            let (succ, prob) = d.perturbed.row(0);
            let get = |j: u32| succ.iter().position(|&x| x == j).map_or(0.0, |i| prob[i]);
            let (stay, go) = (get(0), get(1));
            total += (go / (stay + go) - 0.7).abs();
        }
        total / 200.0
    };
    let (a, b, c) = (mean_dev(10), mean_dev(100), mean_dev(1000));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn sparse_mode_is_flagged_and_stochastic() {
    let m = v2();
    let mut spec = NoiseSpec::new(0.5, 1);
    spec.dense_support_cap = 10;
    spec.sparse_sample_k = 8;
    let d = inject_noise(m.clone(), spec).unwrap();
    assert!(d.approximate);
    assert!(validate_mdp(&d.to_mdp()).is_empty());
    let dense = inject_noise(m, NoiseSpec::new(0.5, 1)).unwrap();
    assert!(!dense.approximate);
}

#[test]
fn invalid_std_is_rejected() {
    let m = chain(3);
    assert!(inject_noise(m.clone(), NoiseSpec::new(-0.1, 0)).is_err());
    assert!(inject_noise(m, NoiseSpec::new(f64::NAN, 0)).is_err());
}

#[test]
fn perturb_matches_explicit_draws() {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let m = chain(6);
    let noise = NoiseSpec::new(0.3, 11);
    let seed = row_seed(noise.seed, 4, 2, Action::Right);
    let mut out = Vec::new();
    RowPerturber::new().perturb(&m, m.transitions(), 2, &noise, seed, &mut out);
    let mut rng = crate::seed::rng_from(seed);
    let mut deltas: Vec<f64> = (0..6).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut expected = Vec::new();
    let (succ, prob) = m.transitions().row(2);
    apply_deltas(succ, prob, &mut deltas, &mut expected);
    assert_eq!(out, expected);
}

proptest! {
    #[test]
    fn rows_stay_stochastic(std in 0.0f64..2.0, seed in any::<u64>(), n in 2usize..40) {
        let m = chain(n);
        let d = inject_noise(m, NoiseSpec::new(std, seed)).unwrap();
        for r in 0..d.perturbed.row_count() {
            let (_, p) = d.perturbed.row(r);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn distance_is_bounded(std in 0.0f64..2.0, seed in any::<u64>()) {
        let m = chain(12);
        let d = inject_noise(m.clone(), NoiseSpec::new(std, seed)).unwrap();
        let dist = table_distance(m.transitions(), &d.perturbed).unwrap();
        prop_assert!((0.0..=1.0).contains(&dist));
    }
}
