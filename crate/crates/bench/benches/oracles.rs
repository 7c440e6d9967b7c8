use criterion::{black_box, criterion_group, criterion_main, Criterion};
use sri_core::harness::ExperimentConfig;
use sri_core::oracles::problem::f1;
use sri_core::oracles::{conditional_mean, conditional_mean_by_quadrature, zo_gradient};
use sri_core::{pt, RandomSource};

fn estimator(c: &mut Criterion) {
    let cfg = ExperimentConfig::fig1();
    let zo = cfg.zo_config(0.1).unwrap();
    let p = f1();
    let x = pt![0.3, -0.2];
    let mut rng = RandomSource::new(0);
    c.bench_function("zo_gradient f1", |b| {
        b.iter(|| zo_gradient(&p, &zo, black_box(&x), &mut rng).unwrap())
    });
    c.bench_function("conditional_mean closed form", |b| {
        b.iter(|| conditional_mean(&p, &zo, black_box(&x)).unwrap())
    });
    c.bench_function("conditional_mean quadrature", |b| {
        b.iter(|| conditional_mean_by_quadrature(&p, &zo, black_box(&x)).unwrap())
    });
}

criterion_group!(benches, estimator);
criterion_main!(benches);
