//! Sequential against rayon execution for the two hot paths: one full
//! device solve and a small perturbative ensemble.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ringfwm::linalg::c;
use ringfwm::lingrid::KGrid;
use ringfwm::montecarlo::{run_ensemble, EnsembleConfig};
use ringfwm::par::Execution;
use ringfwm::pipeline::{solve_device, Engine};
use ringfwm::ringscene::{RingDefectParams, RingScenario, ScenarioDefects};

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::with_workers(0))]
}

fn scenario(points: usize) -> RingScenario {
    RingScenario {
        grid: KGrid::symmetric(points, 2515.01).unwrap(),
        ..RingScenario::default()
    }
    .with_strength(0.1)
}

fn full_solve(cr: &mut Criterion) {
    let sc = scenario(61);
    let defects = ScenarioDefects {
        pump: RingDefectParams::splitting(c(2e10, 0.0)),
        signal: RingDefectParams::splitting(c(5e9, 0.0)),
        ..Default::default()
    };
    let mut group = cr.benchmark_group("full_solve");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| solve_device(&sc, &defects, Engine::Full, exec).unwrap())
        });
    }
    group.finish();
}

fn ensemble(cr: &mut Criterion) {
    let sc = scenario(61);
    let cfg = EnsembleConfig {
        n_samples: 16,
        engine: Engine::Perturbative,
        ..Default::default()
    };
    let mut group = cr.benchmark_group("ensemble");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_ensemble(&cfg, &sc, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, full_solve, ensemble);
criterion_main!(benches);
