use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use msm_bench::{cohort, simulator};
use msm_core::simulation::{fit_weibull, transition_observations, Clock, CohortSpec};
use msm_core::Transition;

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_cohort");
    for label in ["1", "3c", "6"] {
        let sim = simulator(label);
        group.bench_function(format!("setting {label} n=488"), |b| {
            b.iter(|| sim.simulate_cohort(black_box(&CohortSpec::new(488, 6))))
        });
    }
    group.finish();
}

fn weibull_fit(c: &mut Criterion) {
    let data = cohort("1", 5000, 7);
    let obs = transition_observations(&data, Transition::new(1, 2), Clock::Forward);
    c.bench_function("fit_weibull 1->2 n=5000", |b| {
        b.iter(|| fit_weibull(black_box(&obs), None))
    });
}

criterion_group!(benches, simulate, weibull_fit);
criterion_main!(benches);
