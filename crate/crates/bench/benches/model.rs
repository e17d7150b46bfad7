use criterion::{criterion_group, criterion_main, Criterion};
use loopcascade::{amplification_curve, amplification_full, breakeven_beta, ModelParams, ModelUncertainty};
use std::hint::black_box;

fn params() -> ModelParams {
    ModelParams {
        r1: 1.52e6,
        p_spdc: 1e-6,
        ..ModelParams::default()
    }
}

fn model(c: &mut Criterion) {
    let p = params().with_beta(0.93);
    c.bench_function("amplification_full", |b| b.iter(|| amplification_full(black_box(&p))));
    let grid: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
    let u = ModelUncertainty {
        eta_switch: 0.03,
        r1: 0.03e6,
    };
    c.bench_function("curve_100", |b| b.iter(|| amplification_curve(&params(), u, black_box(&grid))));
    c.bench_function("breakeven", |b| b.iter(|| breakeven_beta(black_box(&params()))));
}

criterion_group!(benches, model);
criterion_main!(benches);
