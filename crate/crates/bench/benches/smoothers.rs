use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use parode::nalgebra::DMatrix;
use parode::{by_name, para_rts, seq_rts, tria, IeksConfig, IwpPrior, Method, WorkPool};
use parode_bench::LinearModel;

fn linear_smoothers(c: &mut Criterion) {
    let pool = WorkPool::hardware().unwrap();
    let problem = by_name("logistic").unwrap();
    let mut group = c.benchmark_group("linear_smoother");
    for steps in [64, 256, 1024] {
        let m = LinearModel::new(&problem, 2, steps).unwrap();
        group.bench_with_input(BenchmarkId::new("sequential", steps), &m, |b, m| {
            b.iter(|| seq_rts(black_box(&m.init), &m.transitions, &m.observations).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("scan", steps), &m, |b, m| {
            b.iter(|| para_rts(&pool, black_box(&m.init), &m.transitions, &m.observations).unwrap())
        });
    }
    group.finish();
}

fn tria_sizes(c: &mut Criterion) {
    let mut group = c.benchmark_group("tria");
    for n in [3, 6, 9] {
        let m = DMatrix::from_fn(n, 2 * n, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| tria(black_box(m)).unwrap()));
    }
    group.finish();
}

fn full_solves(c: &mut Criterion) {
    let pool = WorkPool::hardware().unwrap();
    let problem = by_name("vanderpol").unwrap();
    let prior = IwpPrior::new(2, problem.ivp.dim()).unwrap();
    let grid = parode::uniform_grid(problem.ivp.t_end(), 100);
    let cfg = IeksConfig::default();
    let mut group = c.benchmark_group("vanderpol_n100");
    group.sample_size(10);
    for method in [Method::ParaIeks, Method::Ieks, Method::Eks] {
        group.bench_function(method.name(), |b| {
            b.iter(|| parode::solve(method, &problem.ivp, &prior, &grid, &cfg, &pool).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, linear_smoothers, tria_sizes, full_solves);
criterion_main!(benches);
