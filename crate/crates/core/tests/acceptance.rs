//! End-to-end acceptance run. Prints one line per criterion and exits
//! non-zero if any of them fails.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bubblesheet_core::barriers::{
    barrier_compare, solve_shrinkers, RotatedBarrier, ShrinkerProfile, ShrinkerResolution, BARRIER_INNER_RADIUS,
};
use bubblesheet_core::flow::{BoundaryPolicy, FlowSolver, FlowState};
use bubblesheet_core::geometry::{expansion_residual, ou_apply};
use bubblesheet_core::harness::{
    bowl_report, emit_phase_portrait, intermediate_trend, run_experiment, run_experiment_with, shrinker_report, write_history,
    write_modes, write_phase, GridConfig, IntermediateCheck, Scenario, ScenarioConfig,
};
use bubblesheet_core::modes::{
    classify_q, integrate_modes, phase_jacobian, phase_vector_field, rotated_rank_one, separatrix_check, ModeOptions,
    PhaseBox,
};
use bubblesheet_core::spectral::{
    merle_zaag_classify, unit_norm_squared, GaussianQuadrature, NEUTRAL_MODES, UNSTABLE_EIGENVALUES, UNSTABLE_MODES,
};
use bubblesheet_core::{CylinderGraph, CylinderSpec, Dominance, FlowField, Grid};

const SQRT_8: f64 = 2.828_427_124_746_190_3;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Gaussian moments `E[y^k]` for the weight `exp(-y^2/4)` (variance 2), times
/// the normalization of `<1, 1>`.
fn moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    // (k-1)!! * 2^(k/2)
    let mut m = 1.0;
    let mut j = k as i64 - 1;
    while j > 0 {
        m *= j as f64;
        j -= 2;
    }
    m * 2f64.powi(k as i32 / 2)
}

fn spectral_identities() -> Outcome {
    let q = GaussianQuadrature::gauss_hermite(16, 8).unwrap();
    let [p1, _, p3, ..] = NEUTRAL_MODES;
    let n1 = q.inner_fn(p1, p1);
    let n3 = q.inner_fn(p3, p3);
    let c111 = q.inner_fn(|y, t| p1(y, t) * p1(y, t), p1);
    let c331 = q.inner_fn(|y, t| p3(y, t) * p3(y, t), p1);
    // closed forms from the moments 1, 2, 12, 120
    let one = unit_norm_squared();
    let n1_exact = (moment(4) - 4.0 * moment(2) + 4.0) * one;
    let c111_exact = (moment(6) - 6.0 * moment(4) + 12.0 * moment(2) - 8.0) * one;
    let errs = [
        rel(n3, 2.0 * n1),
        rel(c111, 8.0 * n1),
        rel(c331, 4.0 * n3),
        rel(n1, n1_exact),
        rel(c111, c111_exact),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    outcome(worst <= 1e-10, format!("max relative error {worst:.2e} (tol 1e-10)"))
}

fn eigenstructure() -> Outcome {
    let grid = Grid::uniform(CylinderSpec::BUBBLE_SHEET, 4.0, 33, 16).unwrap();
    let h = grid.spacing().unwrap().max(grid.dtheta());
    let mut worst: f64 = 0.0;
    let pairs = NEUTRAL_MODES.iter().map(|f| (*f, 0.0)).chain(UNSTABLE_MODES.iter().copied().zip(UNSTABLE_EIGENVALUES));
    for (f, lambda) in pairs {
        let u = FlowField::from_fn(&grid, f);
        let lu = ou_apply(&u).unwrap();
        worst = worst.max(lu.zip_with(&u, |a, b| a - lambda * b).unwrap().max_abs());
    }
    outcome(worst <= 10.0 * h * h, format!("max |Lf - lambda f| = {worst:.2e}, 10 h^2 = {:.2e}", 10.0 * h * h))
}

fn stationarity() -> Outcome {
    let grid = Grid::uniform(CylinderSpec::BUBBLE_SHEET, 2.0, 9, 8).unwrap();
    let cyl = ScenarioConfig::new(Scenario::Cylinder, -20.0, -10.0, GridConfig { half_width: 4.0, n_y: 17, n_theta: 8 }, 1.0);
    let exp = run_experiment(&cyl).unwrap();
    let drift = exp.last.graph.values().iter().map(|v| (v - SQRT_2).abs()).fold(0.0, f64::max);

    // (v^2)' = v^2 - 2, so v^2 = 2 + C e^tau
    let mut solver = FlowSolver::new(&grid, BoundaryPolicy::Neumann).unwrap();
    let dtau = solver.cfl_step(0.15);
    let (tau0, steps) = (-12.0, (10.0 / dtau).ceil() as usize);
    let dtau = 10.0 / steps as f64;
    let mut worst: f64 = 0.0;
    // shrinking radii reach zero within a few units of tau, so start close to sqrt 2
    for v0 in [(2.0f64 - 4e-5).sqrt(), (2.0f64 + 1e-4).sqrt()] {
        let c = (v0 * v0 - 2.0) / f64::exp(tau0);
        let mut s = FlowState::new(tau0, CylinderGraph::constant(&grid, v0).unwrap()).unwrap();
        for _ in 0..steps {
            s = solver.step(&s, dtau).unwrap();
        }
        let exact = (2.0 + c * s.tau.exp()).sqrt();
        worst = worst.max(s.graph.values().iter().map(|v| (v - exact).abs()).fold(0.0, f64::max));
    }
    outcome(
        drift <= 1e-12 && worst <= 1e-6,
        format!("cylinder drift {drift:.2e} (tol 1e-12), constant-radius error {worst:.2e} over 10 (tol 1e-6)"),
    )
}

fn expansion_order() -> Outcome {
    let grid = Grid::uniform(CylinderSpec::BUBBLE_SHEET, 3.0, 25, 16).unwrap();
    let shape = |y: [f64; 2], t: f64| (y[0] * y[0] - 2.0) + 0.5 * y[1] * t.cos() + 0.3 * (0.7 * y[0]).sin() * (2.0 * t).sin();
    let eps = [1e-1, 1e-2, 1e-3];
    let sup: Vec<f64> = eps
        .iter()
        .map(|e| expansion_residual(&FlowField::from_fn(&grid, |y, t| e * shape(y, t))).unwrap().max_abs())
        .collect();
    // least-squares slope of log sup |E| against log eps
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = sup.iter().map(|s| s.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    outcome(slope >= 2.9, format!("order {slope:.3} (min 2.9), sup |E| = {:?}", sup.iter().map(|s| format!("{s:.2e}")).collect::<Vec<_>>()))
}

fn quantization() -> Outcome {
    let (tau0, tau1) = (-1e7, -1e2);
    let a = 1.0 / (SQRT_8 * tau0);
    let q_iso = -1.0 / SQRT_8;
    let cases: [(&str, [f64; 3], usize, [f64; 2], Option<f64>); 6] = [
        ("rank 2", [a, a, 0.0], 2, [q_iso, q_iso], None),
        ("rank 1", [0.0, a, 0.0], 1, [q_iso, 0.0], Some(0.0)),
        ("rotated 0.3", rotated_rank_one(a, 0.3), 1, [q_iso, 0.0], Some(0.3)),
        ("rotated -1.1", rotated_rank_one(a, -1.1), 1, [q_iso, 0.0], Some(-1.1)),
        ("rotated 1.4", rotated_rank_one(a, 1.4), 1, [q_iso, 0.0], Some(1.4)),
        ("zero", [0.0; 3], 0, [0.0, 0.0], None),
    ];
    let mut ok = true;
    let (mut eig_err, mut angle_err): (f64, f64) = (0.0, 0.0);
    for (name, seed, rank, eig, angle) in cases {
        let traj = integrate_modes(seed, tau0, tau1, &ModeOptions::default()).unwrap();
        let q = classify_q(&traj).unwrap();
        let e = (q.raw_eigenvalues[0] - eig[0]).abs().max((q.raw_eigenvalues[1] - eig[1]).abs());
        eig_err = eig_err.max(e);
        if q.rank != Some(rank) {
            ok = false;
            eprintln!("  {name}: rank {:?}, expected {rank}", q.rank);
        }
        if let Some(phi) = angle {
            let d = q.angle.map_or(f64::INFINITY, |p| {
                let d = (p - phi).rem_euclid(PI);
                d.min(PI - d)
            });
            angle_err = angle_err.max(d);
        }
    }
    outcome(
        ok && eig_err <= 0.02 && angle_err <= 1e-4,
        format!("ranks {}, eigenvalue error {eig_err:.2e} (tol 0.02), angle error {angle_err:.2e} rad (tol 1e-4)", if ok { "ok" } else { "WRONG" }),
    )
}

fn phase_plane() -> Outcome {
    let zeros_exact = phase_vector_field(0.5, 0.0) == [0.0, 0.0] && phase_vector_field(1.0, 1.0) == [0.0, 0.0];
    // analytic Jacobians: [[1, -1], [0, -1]] and [[3, -1], [2, 0]], checked by central differences
    let mut jac_err: f64 = 0.0;
    for (p, want) in [([0.5, 0.0], [[1.0, -1.0], [0.0, -1.0]]), ([1.0, 1.0], [[3.0, -1.0], [2.0, 0.0]])] {
        let j = phase_jacobian(p[0], p[1]);
        let h = 1e-5;
        for c in 0..2 {
            let mut a = p;
            let mut b = p;
            a[c] += h;
            b[c] -= h;
            let (fa, fb) = (phase_vector_field(a[0], a[1]), phase_vector_field(b[0], b[1]));
            for r in 0..2 {
                jac_err = jac_err.max((j[r][c] - want[r][c]).abs());
                jac_err = jac_err.max(((fa[r] - fb[r]) / (2.0 * h) - want[r][c]).abs());
            }
        }
    }
    let rep = separatrix_check(100).unwrap();
    let spec_err = (rep.saddle_eigenvalues[0] + 1.0).abs().max((rep.saddle_eigenvalues[1] - 1.0).abs())
        .max((rep.source_eigenvalues[0] - 1.0).abs())
        .max((rep.source_eigenvalues[1] - 2.0).abs());
    let ok = zeros_exact
        && spec_err <= 1e-10
        && jac_err <= 1e-9
        && rep.connector_reached
        && rep.reverse_attempts == 100
        && rep.reverse_successes == 0;
    outcome(
        ok,
        format!(
            "zeros exact {zeros_exact}, spectra error {spec_err:.1e} (tol 1e-10), connector reached {} (closest {:.1e}), reverse successes {}/{}",
            rep.connector_reached, rep.connector.closest_approach.unwrap_or(f64::NAN), rep.reverse_successes, rep.reverse_attempts
        ),
    )
}

/// Criteria 7 and 9 share one rank-two run.
fn tracking_and_barrier() -> (Outcome, Outcome) {
    let grid = GridConfig { half_width: 8.0, n_y: 96, n_theta: 32 };
    let cfg = ScenarioConfig::new(Scenario::Rank2Seed, -200.0, -180.0, grid, 0.5);
    let barrier = RotatedBarrier::new(bubblesheet_core::barriers::solve_shrinker(10.0).unwrap(), 0.0).unwrap();
    let g = cfg.build_grid().unwrap();
    let static_clearance =
        barrier_compare(&CylinderGraph::constant(&g, SQRT_2).unwrap(), &barrier, BARRIER_INNER_RADIUS).unwrap();
    let mut run_clearance = f64::INFINITY;
    let mut all_enclosed = true;
    let start = Instant::now();
    let exp = run_experiment_with(&cfg, |state, _| {
        let v = barrier_compare(&state.graph, &barrier, BARRIER_INNER_RADIUS)?;
        run_clearance = run_clearance.min(v.min_clearance);
        all_enclosed &= v.enclosed;
        Ok(())
    })
    .unwrap();
    let elapsed = start.elapsed();

    let mut track: f64 = 0.0;
    let mut alpha3: f64 = 0.0;
    for r in &exp.rows {
        let exact = 1.0 / (SQRT_8 * r.tau);
        track = track.max(rel(r.alpha[0], exact)).max(rel(r.alpha[1], exact));
        alpha3 = alpha3.max(r.alpha[2].abs());
    }
    let modes: Vec<_> = exp.rows.iter().map(|r| r.modes()).collect();
    let verdict = merle_zaag_classify(&modes).unwrap().verdict;
    let area = exp.report.area_increase;
    let complete = !exp.report.partial && exp.rows.last().is_some_and(|r| (r.tau + 180.0).abs() < 1e-9);
    let ok7 = complete
        && track <= 0.1
        && alpha3 <= 1e-3
        && verdict == Dominance::NeutralDominant
        && area <= 1e-8
        && elapsed < Duration::from_secs(600);
    let seven = outcome(
        ok7,
        format!(
            "alpha1,2 deviation {track:.2e} (tol 0.1), |alpha3| {alpha3:.1e} (tol 1e-3), {verdict:?}, F increase {area:.1e} (tol 1e-8), {:.0} s",
            elapsed.as_secs_f64()
        ),
    );
    let ok9 = static_clearance.enclosed && static_clearance.min_clearance > 0.0 && all_enclosed && run_clearance > 0.0;
    let nine = outcome(
        ok9,
        format!(
            "a = 10 on {BARRIER_INNER_RADIUS} <= |y| <= 8: cylinder clearance {:.4}, smallest clearance along the run {run_clearance:.4}",
            static_clearance.min_clearance
        ),
    );
    (seven, nine)
}

fn shrinker_suite() -> Outcome {
    let a_values = [9.0, 25.0, 100.0, 400.0];
    let fine = solve_shrinkers(&a_values, ShrinkerResolution::default());
    let coarse = solve_shrinkers(&a_values, ShrinkerResolution { body: 6000, tip: 400 });
    let mut ok = true;
    let mut resid: f64 = 0.0;
    let mut endpoint: f64 = 0.0;
    let mut res_gap: f64 = 0.0;
    let mut dist = Vec::new();
    for ((a, f), c) in a_values.iter().zip(fine).zip(coarse) {
        let (f, c): (ShrinkerProfile, ShrinkerProfile) = (f.unwrap(), c.unwrap());
        let rep = shrinker_report(&f);
        resid = resid.max(rep.body_residual).max(rep.tip_residual);
        endpoint = endpoint.max(rep.endpoint);
        ok &= rep.concavity_defect <= 0.0;
        if *a <= 100.0 {
            ok &= rep.neck_squared >= 2.0 - 2.0 / a;
        }
        for k in 0..=20 {
            let r = a * k as f64 / 20.0;
            res_gap = res_gap.max((f.radius(r).unwrap() - c.radius(r).unwrap()).abs());
        }
        dist.push(rep.ellipse_distance);
    }
    let decreasing = dist.windows(2).all(|w| w[1] < w[0]);
    outcome(
        ok && resid <= 1e-8 && endpoint <= 1e-6 && res_gap <= 1e-8 && decreasing,
        format!(
            "residual {resid:.1e} (tol 1e-8), resolution gap {res_gap:.1e}, endpoint {endpoint:.0e}, neck and concavity {}, ellipse distance {dist:.4?}",
            if ok { "ok" } else { "FAIL" }
        ),
    )
}

fn intermediate_region() -> Outcome {
    let mut cfg = ScenarioConfig::new(
        Scenario::Rank2Seed,
        -100.0,
        -25.0,
        GridConfig { half_width: 6.0, n_y: 73, n_theta: 8 },
        5.0,
    );
    cfg.intermediate = Some(IntermediateCheck { z2_max: 1.0, tolerance: 0.15 });
    let exp = run_experiment(&cfg).unwrap();
    let devs: Vec<_> = exp.report.regions.iter().filter_map(|r| r.intermediate.clone()).collect();
    let last = devs.last().unwrap();
    // the trend is judged on the disk every checkpoint covers
    let (z_common, series) = intermediate_trend(&devs);
    let monotone = series.windows(2).all(|w| w[1] >= w[0]);
    let full = devs.iter().filter(|d| d.full_coverage).count();
    let ok = !exp.report.partial && (last.tau + 25.0).abs() < 1e-9 && last.deviation <= 0.15 && monotone;
    outcome(
        ok,
        format!(
            "deviation {:.4} at tau = -25 (tol 0.15), monotone in |tau| on |z| <= {z_common:.3} {monotone}, {} checkpoints ({full} with full coverage)",
            last.deviation,
            devs.len()
        ),
    )
}

fn bowl() -> Outcome {
    let (_, rep) = bowl_report(1.0 / SQRT_2).unwrap();
    let ok = rep.residual <= 1e-8 && rep.scaling_error <= 1e-8 && (rep.far_ratio - 1.0).abs() <= 0.02 && rep.passed;
    outcome(
        ok,
        format!(
            "residual {:.1e} (tol 1e-8), scaling {:.1e} (tol 1e-8), h(1000)/(c 10^6/2) = {:.5} (within 2%)",
            rep.residual, rep.scaling_error, rep.far_ratio
        ),
    )
}

fn determinism() -> Outcome {
    let grid = GridConfig { half_width: 5.0, n_y: 25, n_theta: 8 };
    let mut scenarios = vec![
        ScenarioConfig::new(Scenario::Rank2Seed, -60.0, -57.0, grid, 0.25),
        ScenarioConfig::new(Scenario::UnstableSeed, -60.0, -58.0, grid, 0.25),
        ScenarioConfig::new(Scenario::Rank1RotatedSeed, -60.0, -58.0, grid, 0.25),
    ];
    scenarios[2].rotation = 0.5;
    let mut identical = true;
    for cfg in &scenarios {
        let csv = || {
            let mut buf = Vec::new();
            write_history(&mut buf, &run_experiment(cfg).unwrap().rows).unwrap();
            buf
        };
        identical &= csv() == csv();
        let modes = || {
            let mut buf = Vec::new();
            write_modes(&mut buf, &bubblesheet_core::harness::run_modes(cfg).unwrap().samples).unwrap();
            buf
        };
        identical &= modes() == modes();
    }
    let phase = || {
        let mut buf = Vec::new();
        write_phase(&mut buf, &emit_phase_portrait(&PhaseBox { x: [-0.25, 1.5], y: [-0.25, 1.5] }, 8).unwrap()).unwrap();
        buf
    };
    identical &= phase() == phase();
    outcome(identical, format!("{} scenarios and the phase portrait reproduced byte for byte: {identical}", scenarios.len()))
}

type Criterion = (usize, &'static str, f64, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "spectral identities", 1.0, spectral_identities),
    (2, "eigenstructure", 1.0, eigenstructure),
    (3, "stationarity and constant-radius law", 10.0, stationarity),
    (4, "quadratic expansion order", 10.0, expansion_order),
    (5, "mode ODE quantization", 30.0, quantization),
    (6, "phase-plane dichotomy", 30.0, phase_plane),
    (8, "shrinker suite", 60.0, shrinker_suite),
    (10, "intermediate-region trend", 900.0, intermediate_region),
    (11, "bowl translator", 10.0, bowl),
    (12, "determinism", 600.0, determinism),
];

fn timed(budget: f64, f: fn() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = std::panic::catch_unwind(f).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    let s = t.elapsed().as_secs_f64();
    if s > budget {
        o.passed = false;
    }
    o.detail.push_str(&format!(" [{s:.2} s, budget {budget} s]"));
    o
}

fn main() -> ExitCode {
    // positional arguments filter by criterion name, as with the default test harness
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));

    let mut results: Vec<(usize, &str, Outcome)> = CRITERIA
        .iter()
        .filter(|c| selected(c.1))
        .map(|&(k, name, budget, f)| (k, name, timed(budget, f)))
        .collect();
    let (seven, nine) = ("PDE tracks the mode ODE", "barrier enclosure");
    if selected(seven) || selected(nine) {
        let (a, b) = std::panic::catch_unwind(tracking_and_barrier)
            .unwrap_or_else(|_| (outcome(false, "panicked".into()), outcome(false, "panicked".into())));
        results.push((7, seven, a));
        results.push((9, nine, b));
    }
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (k, name, o) in &results {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {k:2} {tag}  {name}: {}", o.detail);
        failed += usize::from(!o.passed);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
