use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pathfk::bsde::{solve_regression_on, ZeroGenerator};
use pathfk::calculus::functionals::terminal_component;
use pathfk::cascade::{cascade_solve, CascadeSpec};
use pathfk::{simulate, CadlagPath, RegressionBasis, SimulationConfig, SolverOptions, TimeGrid};

fn config(paths: usize, steps: usize) -> SimulationConfig {
    SimulationConfig::new(TimeGrid::new(0.0, 1.0, steps).unwrap(), 1, paths, 1)
}

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for paths in [1_000, 10_000] {
        let cfg = config(paths, 50);
        group.bench_with_input(BenchmarkId::from_parameter(paths), &cfg, |b, cfg| {
            b.iter(|| simulate(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

fn bench_regression(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_regression");
    group.sample_size(10);
    let phi = terminal_component(0);
    let prefix = CadlagPath::constant(&[0.7], 0.0).unwrap();
    let basis = RegressionBasis::default_for(1);
    let opts = SolverOptions::default();
    for paths in [1_000, 10_000] {
        let batch = simulate(&config(paths, 50)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(paths), &batch, |b, batch| {
            b.iter(|| solve_regression_on(&phi, &ZeroGenerator, prefix.view(), batch, &basis, &opts).unwrap())
        });
    }
    group.finish();
}

fn bench_cascade(c: &mut Criterion) {
    let mut group = c.benchmark_group("cascade");
    group.sample_size(10);
    let path = CadlagPath::constant(&[0.6], 0.25).unwrap();
    for nodes in [101, 201] {
        let mut spec = CascadeSpec::new("x2", 0.5, 1.0, |x, _| x * x);
        spec.nodes = nodes;
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &spec, |b, spec| {
            b.iter(|| cascade_solve(spec, path.view()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_regression, bench_cascade);
criterion_main!(benches);
