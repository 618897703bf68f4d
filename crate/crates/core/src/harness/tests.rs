use super::*;
use crate::analysis::PairLayout;
use crate::bitset::PairSet;


fn tiny_protocol() -> Protocol {
    Protocol { n_agents: 6, n_episodes: 20, eval_every: 5, eval_episodes: 2, ..Protocol::full() }
}

fn v2() -> EnvDescriptor {
    EnvDescriptor::builtin("v2").unwrap()
}

fn noisy_spec() -> ExperimentSpec {
    make_generalization_spec(
        &v2(),
        &v2().with_noise(0.1),
        &AgentConfig::default(),
        &tiny_protocol(),
        &NoiseSettings::default(),
    )
    .unwrap()
}

#[test]
fn protocol_arithmetic() {
    let full = Protocol::full();
    assert_eq!((full.n_agents, full.n_episodes, full.eval_every, full.eval_episodes), (500, 1000, 10, 10));
    assert_eq!(full.checkpoints(), 100);
    assert_eq!(full.checkpoints() * full.eval_episodes, 1000);
    assert_eq!(Protocol::desk().checkpoints(), 30);
    let bad = Protocol { eval_every: 7, ..full };
    assert!(matches!(bad.validate(), Err(HarnessError::InvalidSpec(_))));
    assert!(Protocol { n_agents: 0, ..full }.validate().is_err());
}

#[test]
fn run_shape_and_aggregation() {
    let spec = noisy_spec();
    let r = run_experiment(&spec, Execution::Sequential).unwrap();
    assert_eq!(r.curve.len(), 4);
    assert_eq!(r.curve.iter().map(|p| p.episode).collect::<Vec<_>>(), vec![5, 10, 15, 20]);
    assert_eq!(r.per_agent_final.len(), 6);
    assert_eq!(r.per_agent_curves.len(), 6);
    for (k, p) in r.curve.iter().enumerate() {
        let xs: Vec<f64> = r.per_agent_curves.iter().map(|c| c[k]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((p.mean_return - mean).abs() < 1e-9);
        assert!((p.std_return - var.sqrt()).abs() < 1e-9);
        assert_eq!(p.n_agents, 6);
    }
    for (i, f) in r.per_agent_final.iter().enumerate() {
        assert_eq!(f.agent_index, i);
        assert_eq!(f.final_return, *r.per_agent_curves[i].last().unwrap());
    }
    let mut union = PairSet::new(r.pair_count());
    for v in &r.per_agent_visited {
        union.union_with(v);
    }
    assert_eq!(union, r.visited_union);
    assert_eq!(r.spec_fingerprint, spec.fingerprint());
    assert_eq!(PairLayout::from_run(&r).pair_count(), r.pair_count());
    assert!(r.best_case_return.is_finite());
}

#[test]
fn single_and_many_checkpoints() {
    let one = Protocol { n_agents: 2, n_episodes: 3, eval_every: 3, eval_episodes: 1, ..Protocol::full() };
    let spec = make_learnability_spec(&v2(), &AgentConfig::default(), &one, &NoiseSettings::default());
    assert_eq!(run_experiment(&spec, Execution::Sequential).unwrap().curve.len(), 1);
    let many = Protocol { n_agents: 1, n_episodes: 100, eval_every: 1, eval_episodes: 1, ..Protocol::full() };
    let spec = make_learnability_spec(&v2(), &AgentConfig::default(), &many, &NoiseSettings::default());
    assert_eq!(run_experiment(&spec, Execution::Sequential).unwrap().curve.len(), 100);
}

#[test]
fn runs_are_deterministic_across_schedules() {
    let spec = noisy_spec();
    let a = run_experiment(&spec, Execution::Sequential).unwrap();
    let b = run_experiment(&spec, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    if cfg!(feature = "parallel") {
        for workers in [2, 4] {
            let p = run_experiment(&spec, Execution::Parallel { workers }).unwrap();
            assert_eq!(a, p, "workers {workers}");
        }
    }
    let mut other = spec.clone();
    other.protocol.base_seed = 1;
    assert_ne!(run_experiment(&other, Execution::Sequential).unwrap().curve, a.curve);
}

#[test]
fn paired_runs_share_a_pair_universe() {
    let pair = SuitePair::new(
        &v2(),
        &v2().with_policy(ElementPolicy::directional_ghost(0.6)),
        &AgentConfig::default(),
        &tiny_protocol(),
        &NoiseSettings::default(),
    )
    .unwrap();
    let (l_train, l_test) = build_mdps(&pair.learnability).unwrap();
    let (g_train, g_test) = build_mdps(&pair.generalization).unwrap();
    assert_eq!(l_train.state_count(), g_train.state_count());
    assert_eq!(l_train.index().states(), g_train.index().states());
    assert_eq!(l_test.transitions(), g_test.transitions());
    assert_eq!(PairLayout::from_mdp(&l_train), PairLayout::from_mdp(&g_train));
}

#[test]
fn incompatible_environments_are_rejected() {
    let v3 = EnvDescriptor::builtin("v3").unwrap();
    let r = make_generalization_spec(&v2(), &v3, &AgentConfig::default(), &tiny_protocol(), &NoiseSettings::default());
    assert!(matches!(r, Err(HarnessError::IncompatibleEnvironments(_))));
    let p1 = EnvDescriptor::builtin("p1").unwrap();
    assert!(v2().compatible(&p1).is_err());
    let mut other = v2();
    other.rewards = RewardSpec::PACMAN_ALT;
    assert!(v2().compatible(&other).is_err());
    assert!(v2().compatible(&v2().with_noise(0.5)).is_ok());
}

#[test]
fn manifest_counts() {
    let pac = manifest_targets(&["v2"], Counting::Standard).unwrap();
    assert_eq!(pac.len(), 11);
    let all = ["v2", "v3", "v4", "p1", "p2", "b1", "b2", "b3"];
    let standard = manifest_targets(&all, Counting::Standard).unwrap();
    assert_eq!(standard.len(), 60);
    assert_eq!(standard.iter().filter(|(_, t)| t.kind == GameKind::PacMan).count(), 33);
    assert_eq!(standard.iter().filter(|(_, t)| t.kind == GameKind::Pong).count(), 18);
    assert_eq!(standard.iter().filter(|(_, t)| t.kind == GameKind::Breakout).count(), 9);
    assert_eq!(manifest_targets(&all, Counting::Cross).unwrap().len(), 72);
    for (s, t) in &standard {
        assert!(s.compatible(t).is_ok());
        assert_eq!(s.noise_std, 0.0);
    }
}

#[test]
fn persistence_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = noisy_spec();
    let r = run_experiment(&spec, Execution::Sequential).unwrap();
    write_run(dir.path(), &spec, &r).unwrap();
    let loaded = read_run(dir.path()).unwrap();
    assert_eq!(loaded.result, r);
    assert_eq!(loaded.echo, spec.echo());
    for (k, p) in loaded.result.curve.iter().enumerate() {
        let xs: Vec<f64> = loaded.result.per_agent_curves.iter().map(|c| c[k]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((p.mean_return - mean).abs() < 1e-12);
    }
    std::fs::write(dir.path().join("curve.csv"), "episode,mean_return\n5,oops\n").unwrap();
    assert!(matches!(read_run(dir.path()), Err(HarnessError::Corrupt { .. })));
}

#[test]
fn suite_persists_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let protocol = Protocol { n_agents: 3, n_episodes: 10, eval_every: 5, eval_episodes: 1, ..Protocol::full() };
    let pairs: Vec<SuitePair> = manifest_targets(&["v2"], Counting::Standard)
        .unwrap()
        .iter()
        .take(2)
        .map(|(s, t)| SuitePair::new(s, t, &AgentConfig::default(), &protocol, &NoiseSettings::default()).unwrap())
        .collect();
    let result = run_suite(&pairs, Execution::Sequential, Some(dir.path())).unwrap();
    assert_eq!(result.records.len(), 2);
    assert!(result.failures.is_empty());
    assert!(dir.path().join("manifest.json").exists());
    let loaded = SuiteResult::load(dir.path()).unwrap();
    assert_eq!(loaded.records.len(), 2);
    for (a, b) in loaded.records.iter().zip(&result.records) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.learnability.curve, b.learnability.curve);
        assert_eq!(a.generalization.visited_union, b.generalization.visited_union);
    }
}

#[test]
fn spec_fingerprint_tracks_content() {
    let a = noisy_spec();
    let mut b = a.clone();
    assert_eq!(a.fingerprint(), b.fingerprint());
    b.agent.alpha = 0.1;
    assert_ne!(a.fingerprint(), b.fingerprint());
}
