use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use tfac_core::experiments::random_initial_field;
use tfac_core::{
    history_sum_into, l1_row, Field, Grid2D, HelmholtzSolver, ModelParams, SolverOptions, Stepper,
    TimeMesh,
};

fn history_sum(c: &mut Criterion) {
    let grid = Grid2D::periodic_2pi(128).unwrap();
    let mut group = c.benchmark_group("history_sum_m128");
    for n in [50, 200] {
        let history: Vec<Field> = (0..n as u64).map(|s| random_initial_field(grid, 0.5, s)).collect();
        let mesh = TimeMesh::composite_random(n, 3.0, 1.0, 3).unwrap();
        let row = l1_row(&mesh, n, 0.5).unwrap();
        let mut out = vec![0.0; grid.len()];
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| history_sum_into(&history, row.coeffs(), n, black_box(&mut out)).unwrap())
        });
    }
    group.finish();
}

fn helmholtz(c: &mut Criterion) {
    let mut group = c.benchmark_group("helmholtz_solve");
    for m in [64, 256] {
        let grid = Grid2D::periodic_2pi(m).unwrap();
        let mut solver = HelmholtzSolver::new(grid);
        let rhs = random_initial_field(grid, 1.0, 4);
        let mut out = grid.zeros();
        group.bench_function(BenchmarkId::from_parameter(m), |b| {
            b.iter(|| solver.solve_into(2.0, 0.01, black_box(&rhs), &mut out).unwrap())
        });
    }
    group.finish();
}

fn single_step(c: &mut Criterion) {
    let grid = Grid2D::periodic_2pi(128).unwrap();
    let params = ModelParams::new(0.7, 1.0, 0.05).unwrap();
    let phi0 = random_initial_field(grid, 1e-3, 5);
    let mut warm = Stepper::new(params, SolverOptions::default(), phi0, None).unwrap();
    warm.run_mesh(&TimeMesh::graded(0.01, 30, 3.0).unwrap()).unwrap();
    c.bench_function("step_m128_after_30", |b| {
        b.iter_batched(
            || warm.clone(),
            |mut st| {
                st.advance(0.01).unwrap();
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, history_sum, helmholtz, single_step);
criterion_main!(benches);
