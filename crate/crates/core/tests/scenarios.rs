use std::f64::consts::SQRT_2;

use bubblesheet_core::flow::{BoundaryAnsatz, BoundaryPolicy, FlowSolver, FlowState};
use bubblesheet_core::harness::{
    parabolic_error, run_experiment, validate_history, GridConfig, ParabolicCheck, Scenario, ScenarioConfig, Tolerances,
};
use bubblesheet_core::{CylinderGraph, Dominance, FlowField, Grid};

fn run_to(solver: &mut FlowSolver, init: &FlowState, tau1: f64, steps: usize) -> Vec<f64> {
    let dtau = (tau1 - init.tau) / steps as f64;
    let mut s = solver.prepare(init.clone()).unwrap();
    for _ in 0..steps {
        s = solver.step(&s, dtau).unwrap();
    }
    s.graph.values().to_vec()
}

#[test]
fn time_stepping_is_fourth_order() {
    let grid = Grid::uniform(bubblesheet_core::CylinderSpec::BUBBLE_SHEET, 4.0, 17, 8).unwrap();
    let tau0 = -10.0;
    let a = 1.0 / (8f64.sqrt() * tau0);
    let ans = BoundaryAnsatz { tau0, alpha0: [a, 0.5 * a, 0.2 * a], unstable0: [0.0, 0.01, 0.0, 0.0, 0.0] };
    let field = FlowField::from_fn(&grid, |y, t| SQRT_2 + ans.deviation(tau0, y, t) + 0.02 * (0.8 * y[0]).sin() * t.cos());
    let init = FlowState::new(tau0, CylinderGraph::new(field).unwrap()).unwrap();
    let mut solver = FlowSolver::new(&grid, BoundaryPolicy::QuadraticDirichlet(ans)).unwrap();
    let base = (0.5 / solver.cfl_step(0.2)).ceil() as usize;
    let sols: Vec<Vec<f64>> = [1, 2, 4].iter().map(|k| run_to(&mut solver, &init, tau0 + 0.5, base * k)).collect();
    let diff = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (d1, d2) = (diff(&sols[0], &sols[1]), diff(&sols[1], &sols[2]));
    let order = (d1 / d2).log2();
    assert!(order >= 3.5, "observed order {order} ({d1:e}, {d2:e})");
}

fn rank2(half_width: f64, n_y: usize) -> ScenarioConfig {
    ScenarioConfig::new(Scenario::Rank2Seed, -50.0, -45.0, GridConfig { half_width, n_y, n_theta: 8 }, 0.25)
}

#[test]
fn box_size_barely_matters() {
    // same spacing 0.25 on two boxes, early enough that both corners sit inside the tips
    let early = |half_width, n_y| {
        let mut cfg = rank2(half_width, n_y);
        (cfg.tau0, cfg.tau1) = (-100.0, -97.0);
        cfg
    };
    let small = run_experiment(&early(6.0, 49)).unwrap();
    let large = run_experiment(&early(8.0, 65)).unwrap();
    assert!(!large.report.partial);
    let (p, q) = (small.rows.last().unwrap(), large.rows.last().unwrap());
    assert_eq!(p.tau, q.tau);
    for j in 0..2 {
        let d = (p.alpha[j] - q.alpha[j]).abs() / q.alpha[j].abs();
        assert!(d < 1e-2, "alpha{} differs by {d}", j + 1);
    }
}

#[test]
fn ranks_are_discriminated() {
    let r2 = run_experiment(&rank2(6.0, 49)).unwrap();
    let mut cfg = rank2(6.0, 49);
    cfg.scenario = Scenario::Rank1Seed;
    let r1 = run_experiment(&cfg).unwrap();
    assert_eq!(r2.report.quantization.as_ref().unwrap().rank, Some(2));
    assert_eq!(r1.report.quantization.as_ref().unwrap().rank, Some(1));
    assert!(r1.report.passed && r2.report.passed);
    // the rank-one graph misses the rank-two parabola by (y_1^2 - 2)/sqrt 8
    assert!(parabolic_error(&r2.last, 4.0) < 0.1);
    assert!(parabolic_error(&r1.last, 4.0) > 1.0);
}

#[test]
fn rotated_seed_keeps_its_angle() {
    let mut cfg = rank2(6.0, 49);
    cfg.scenario = Scenario::Rank1RotatedSeed;
    cfg.rotation = 0.6;
    let exp = run_experiment(&cfg).unwrap();
    assert!(exp.report.passed, "{:#?}", exp.report.checks);
    assert!(exp.report.check("rotation_deg").unwrap().value < 2.0);
}

#[test]
fn unstable_seed_grows_like_half_exponent() {
    let mut cfg =
        ScenarioConfig::new(Scenario::UnstableSeed, -30.0, -20.0, GridConfig { half_width: 6.0, n_y: 33, n_theta: 8 }, 0.5);
    cfg.epsilon = 1e-4;
    let exp = run_experiment(&cfg).unwrap();
    assert_eq!(exp.report.dominance.unwrap().verdict, Dominance::UnstableDominant);
    let g = exp.report.check("growth_exponent").unwrap();
    assert!(g.value <= 0.1, "growth exponent off by {}", g.value);
}

#[test]
fn parabolic_check_and_partial_histories() {
    let mut cfg = rank2(6.0, 49);
    cfg.parabolic = Some(ParabolicCheck { radius: 4.0, tolerance: 0.1 });
    let exp = run_experiment(&cfg).unwrap();
    assert!(exp.report.check("parabolic").unwrap().value < 0.1);
    // a truncated history still validates what exists
    let head = &exp.rows[..5];
    let rep = validate_history(head, &cfg.expectation(), &Tolerances::default());
    assert_eq!(rep.samples, 5);
    assert!(rep.check("mode_tracking").is_some());
}
