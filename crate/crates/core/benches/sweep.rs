use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use discreg::config::ExperimentConfig;
use discreg::experiment::pde_sweep;

const SMALL: &str = "
kind = pde-sweep
seed = 1
[band]
tau = 1.025
lambda = 1.125
[optimizer]
max_iters = 40
[pde]
fine = 0.01, 0.05
solver = 0.04, 0.2
dtau = 0.2, 0.1, 0.05, 0.04
dy = 0.5, 0.4, 0.25, 0.2
alphas = 0.1, sqrt(delta), 0.01, delta
";

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("pde_sweep");
    group.sample_size(10);
    let threads = std::thread::available_parallelism().map_or(2, |n| n.get().max(2));
    for (label, workers) in [("sequential", 1), ("parallel", threads)] {
        let mut cfg = ExperimentConfig::parse(SMALL).unwrap();
        cfg.workers = workers;
        group.bench_with_input(BenchmarkId::from_parameter(label), &cfg, |b, cfg| {
            b.iter(|| pde_sweep(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
