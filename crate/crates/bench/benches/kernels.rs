use std::f64::consts::SQRT_2;
use std::hint::black_box;

use bubblesheet_core::barriers::{solve_bowl, ShrinkerProfile, ShrinkerResolution};
use bubblesheet_core::flow::{BoundaryAnsatz, BoundaryPolicy, Diagnostics, FlowSolver, FlowState};
use bubblesheet_core::geometry::evolution_rhs;
use bubblesheet_core::modes::{integrate_modes, ModeOptions};
use bubblesheet_core::{CylinderGraph, CylinderSpec, FlowField, Grid};
use criterion::{criterion_group, criterion_main, Criterion};

fn seeded(n_y: usize, n_theta: usize) -> (Grid, FlowState, BoundaryAnsatz) {
    let grid = Grid::uniform(CylinderSpec::BUBBLE_SHEET, 8.0, n_y, n_theta).unwrap();
    let tau0 = -200.0;
    let a = 1.0 / (8f64.sqrt() * tau0);
    let ansatz = BoundaryAnsatz { tau0, alpha0: [a, a, 0.0], unstable0: [0.0; 5] };
    let field = FlowField::from_fn(&grid, |y, t| SQRT_2 + ansatz.deviation(tau0, y, t));
    let state = FlowState::new(tau0, CylinderGraph::new(field).unwrap()).unwrap();
    (grid, state, ansatz)
}

fn flow(c: &mut Criterion) {
    let (grid, state, ansatz) = seeded(96, 32);
    c.bench_function("evolution_rhs 96x96x32", |b| b.iter(|| evolution_rhs(black_box(&state.graph)).unwrap()));
    let mut solver = FlowSolver::new(&grid, BoundaryPolicy::QuadraticDirichlet(ansatz)).unwrap();
    let dtau = solver.cfl_step(0.15);
    c.bench_function("flow step 96x96x32", |b| b.iter(|| solver.step(black_box(&state), dtau).unwrap()));
    let mut diag = Diagnostics::new(&grid, None).unwrap();
    c.bench_function("mode projection 96x96x32", |b| b.iter(|| diag.sample(black_box(&state)).unwrap()));
}

fn odes(c: &mut Criterion) {
    let mut g = c.benchmark_group("ode");
    g.sample_size(10);
    g.bench_function("shrinker a=100", |b| {
        b.iter(|| ShrinkerProfile::solve(black_box(100.0), ShrinkerResolution::default()).unwrap())
    });
    g.bench_function("bowl c=1/sqrt2", |b| b.iter(|| solve_bowl(black_box(1.0 / SQRT_2)).unwrap()));
    let a = 1.0 / (8f64.sqrt() * -1e7);
    g.bench_function("mode ODE rank 2", |b| {
        b.iter(|| integrate_modes(black_box([a, a, 0.0]), -1e7, -1e2, &ModeOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, flow, odes);
criterion_main!(benches);
