//! Criterion benchmarks along the synthesis/simulation pipeline: interval
//! matrix arithmetic, program assembly, one conic solve, and observer steps.

use criterion::{criterion_group, criterion_main, Criterion};
use intobs::matops::{self, MatInterval};
use intobs::model::{pendulum_model, table1_model};
use intobs::observer::{simulate, DirectObserverGains, ObserverGains};
use intobs::synthesis::{assemble_direct, solve_feasibility, Margins, SynthesisTask};
use intobs::transform::build_transform;
use intobs::Mat;
use std::hint::black_box;

fn study_model() -> intobs::SystemModel {
    table1_model(0.2, &Mat::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]))
}

fn dense(n: usize, shift: f64) -> Mat {
    Mat::from_fn(n, n, |i, j| ((i * n + j) as f64 * 0.37 + shift).sin())
}

fn bench_interval_ops(c: &mut Criterion) {
    let mut group = c.benchmark_group("interval_ops");
    for &n in &[4usize, 16, 64] {
        let a = dense(n, 0.0);
        let interval = MatInterval::new(dense(n, 1.0).scale(-1.0).abs().scale(-1.0), dense(n, 1.0).abs()).unwrap();
        group.bench_function(format!("product_{n}x{n}"), |b| {
            b.iter(|| matops::interval_product(black_box(&a), black_box(&interval)).unwrap())
        });
        group.bench_function(format!("pos_neg_split_{n}x{n}"), |b| {
            b.iter(|| (black_box(&a).pos_part(), black_box(&a).neg_part()))
        });
    }
    group.finish();
}

fn bench_assembly(c: &mut Criterion) {
    let model = study_model();
    let margins = Margins::default();
    c.bench_function("assemble_direct_n2", |b| {
        b.iter(|| assemble_direct(black_box(&model), 1.0, 0.5, margins).unwrap())
    });
    let pendulum = pendulum_model(0.065);
    let pair = build_transform(&pendulum.a, &pendulum.c, &Mat::new(2, 1, vec![0.9, 0.5])).unwrap();
    let task = SynthesisTask::transformed(pair);
    c.bench_function("assemble_transformed_n2", |b| {
        b.iter(|| task.assemble(black_box(&pendulum), 1.0, 0.95, margins).unwrap())
    });
}

fn bench_solve(c: &mut Criterion) {
    let model = study_model();
    let program = SynthesisTask::direct().assemble(&model, 1.0, 0.5, Margins::default()).unwrap();
    let mut group = c.benchmark_group("conic_solve");
    group.sample_size(20);
    group.bench_function("single_point_n2", |b| {
        b.iter(|| solve_feasibility(black_box(&program)).unwrap())
    });
    group.finish();
}

fn bench_simulation(c: &mut Criterion) {
    let model = study_model();
    let gains = ObserverGains::Direct(
        DirectObserverGains::new(
            Mat::new(2, 1, vec![0.3, 0.1]),
            Mat::zeros(2, 1),
            Mat::zeros(2, 2),
            model.d_hi.clone(),
        )
        .unwrap(),
    );
    c.bench_function("simulate_1000_steps_n2", |b| {
        b.iter(|| {
            simulate(
                black_box(&model),
                &gains,
                None,
                &[0.0, 0.0],
                &[0.5, 0.5],
                &[-0.5, -0.5],
                1000,
                42,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_interval_ops, bench_assembly, bench_solve, bench_simulation);
criterion_main!(benches);
