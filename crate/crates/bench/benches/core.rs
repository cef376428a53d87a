use std::hint::black_box;

use counterlase::bvpcont::{lin_find_homoclinic, LinOptions};
use counterlase::kneading::{kneading_record, KneadingOptions, Symbols};
use counterlase::localbif::{classify_phase, PhaseOptions};
use counterlase::{simulate, LmgField, ModelParams, SpinState, Tolerances};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::Vector3;

fn field(c: &mut Criterion) {
    let f = LmgField::new(&ModelParams::transitional(1.53292));
    let x = Vector3::new(-0.035, -0.023, -0.495);
    c.bench_function("field eval", |b| b.iter(|| f.eval(black_box(&x))));
    c.bench_function("field jacobian", |b| b.iter(|| f.jacobian(black_box(&x))));
}

fn trajectories(c: &mut Criterion) {
    let p = ModelParams::transitional(1.53292);
    let s0 = SpinState::new(-0.035, -0.023, -0.495);
    c.bench_function("simulate 1000 time units", |b| {
        b.iter(|| simulate(&p, black_box(&s0), (0.0, 1000.0), Tolerances::MANIFOLD, &[]).unwrap())
    });
    c.bench_function("kneading record", |b| {
        b.iter(|| kneading_record(black_box(&p), &KneadingOptions::default()).unwrap())
    });
}

fn searches(c: &mut Criterion) {
    let mut g = c.benchmark_group("searches");
    g.sample_size(10);
    let p = ModelParams::transitional(1.5329);
    g.bench_function("two-loop homoclinic", |b| {
        b.iter(|| {
            lin_find_homoclinic(
                &p,
                &Symbols::new(vec![0, 1]),
                (1.5327, 1.5330),
                &LinOptions::default(),
            )
            .unwrap()
        })
    });
    let q = ModelParams::transitional(1.6);
    g.bench_function("phase classification", |b| {
        b.iter(|| classify_phase(black_box(&q), &PhaseOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, field, trajectories, searches);
criterion_main!(benches);
