use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msm_bench::cohort;
use msm_core::estimators::{
    estimate_aj_from, estimate_haj, estimate_lmaj, nelson_aalen, product_integral, NonMarkovSet,
};
use msm_core::Transition;

fn aalen_johansen(c: &mut Criterion) {
    let mut group = c.benchmark_group("aalen_johansen");
    for n in [488, 4880] {
        let data = cohort("3c", n, 1);
        group.bench_with_input(BenchmarkId::new("nelson_aalen", n), &data, |b, d| {
            b.iter(|| nelson_aalen(black_box(d), None))
        });
        let a = nelson_aalen(&data, None);
        group.bench_with_input(BenchmarkId::new("product_integral", n), &a, |b, a| {
            b.iter(|| product_integral(black_box(a), 245.57, 4892.0))
        });
        group.bench_with_input(BenchmarkId::new("aj_curve", n), &data, |b, d| {
            b.iter(|| estimate_aj_from(black_box(d), 245.57, 1))
        });
    }
    group.finish();
}

fn landmark_and_hybrid(c: &mut Criterion) {
    let data = cohort("3c", 488, 2);
    let m = NonMarkovSet::new([Transition::new(2, 1)], data.state_space()).unwrap();
    c.bench_function("lmaj_curve n=488", |b| {
        b.iter(|| estimate_lmaj(black_box(&data), 245.57, 1))
    });
    c.bench_function("haj_curve n=488", |b| {
        b.iter(|| estimate_haj(black_box(&data), 245.57, 1, &m))
    });
}

criterion_group!(benches, aalen_johansen, landmark_and_hybrid);
criterion_main!(benches);
