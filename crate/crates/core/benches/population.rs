use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use indoor_lab::games::ElementPolicy;
use indoor_lab::harness::{make_generalization_spec, run_experiment, EnvDescriptor, Execution, NoiseSettings, Protocol};
use indoor_lab::AgentConfig;

fn population(c: &mut Criterion) {
    let source = EnvDescriptor::builtin("v2").unwrap();
    let target = source.clone().with_policy(ElementPolicy::random_ghost()).with_noise(0.1);
    let protocol = Protocol { n_agents: 16, n_episodes: 20, ..Protocol::desk() };
    let spec =
        make_generalization_spec(&source, &target, &AgentConfig::default(), &protocol, &NoiseSettings::default())
            .unwrap();

    let mut group = c.benchmark_group("population_v2_16_agents");
    group.sample_size(10);
    let mut modes = vec![("sequential", Execution::Sequential)];
    if cfg!(feature = "parallel") {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        modes.push(("parallel", Execution::Parallel { workers: cores }));
    }
    for (name, exec) in modes {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_experiment(&spec, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, population);
criterion_main!(benches);
