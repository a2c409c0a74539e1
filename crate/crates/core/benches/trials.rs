//! Sequential vs parallel execution of the same batch of trials. Without the
//! `parallel` feature both variants run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use relu_rank::experiments::{run_experiment, ExperimentConfig, ExperimentKind};

fn config(jobs: Option<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Histogram);
    cfg.trials = 32;
    cfg.master_seed = 1;
    cfg.jobs = jobs;
    cfg
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("histogram_32_trials");
    group.sample_size(10);
    for (name, jobs) in [("sequential", Some(1)), ("parallel", None)] {
        let cfg = config(jobs);
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_experiment(cfg).unwrap().summary.converged)
        });
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
