//! Explicit time stepping of the renormalized flow on a truncated box, with
//! boundary policies, recentering of the unstable modes and per-sample
//! diagnostics.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derivatives::DerivativeEngine;
use crate::error::{Error, Result};
use crate::geometry::{evolution_field, pointwise};
use crate::grid::{CylinderGraph, FlowField, Grid};
use crate::spectral::{
    beta_and_radius, theta_defect, truncate, unit_norm_squared, GaussianQuadrature, ModeProjector, ModeState,
    UNSTABLE_EIGENVALUES, UNSTABLE_MODES,
};

/// Largest admissible CFL factor for the explicit scheme.
pub const MAX_CFL: f64 = 0.2;

/// Number of node layers at each end of a flat axis that carry boundary data.
pub const BOUNDARY_LAYERS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub tau: f64,
    pub graph: CylinderGraph,
}

impl FlowState {
    pub fn new(tau: f64, graph: CylinderGraph) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::input(format!("tau must be finite, got {tau}")));
        }
        Ok(Self { tau, graph })
    }
}

/// Mode content of the boundary data: the quadratic neutral part follows
/// `dA/dtau = -sqrt 8 A^2` exactly, the unstable coefficients grow linearly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryAnsatz {
    pub tau0: f64,
    /// `(alpha_1, alpha_2, alpha_3)` at `tau0`.
    pub alpha0: [f64; 3],
    /// Coefficients of `1, y_1, y_2, cos, sin` at `tau0`.
    pub unstable0: [f64; 5],
}

impl BoundaryAnsatz {
    /// `A(tau) = A0 (I + sqrt 8 (tau - tau0) A0)^(-1)`, returned as `(alpha_1, alpha_2, alpha_3)`.
    pub fn alpha(&self, tau: f64) -> [f64; 3] {
        let [a, b, c] = self.alpha0;
        let s = 8f64.sqrt() * (tau - self.tau0);
        // M = I + s A0
        let (m11, m22, m12) = (1.0 + s * a, 1.0 + s * b, s * c);
        let det = m11 * m22 - m12 * m12;
        let (i11, i22, i12) = (m22 / det, m11 / det, -m12 / det);
        [a * i11 + c * i12, c * i12 + b * i22, a * i12 + c * i22]
    }

    pub fn unstable(&self, tau: f64) -> [f64; 5] {
        std::array::from_fn(|j| self.unstable0[j] * (UNSTABLE_EIGENVALUES[j] * (tau - self.tau0)).exp())
    }

    /// Deviation `u` predicted at `(y, theta)`.
    pub fn deviation(&self, tau: f64, y: [f64; 2], theta: f64) -> f64 {
        Self::evaluate(self.alpha(tau), self.unstable(tau), y, theta)
    }

    fn evaluate([a1, a2, a3]: [f64; 3], c: [f64; 5], y: [f64; 2], theta: f64) -> f64 {
        let quad = a1 * (y[0] * y[0] - 2.0) + a2 * (y[1] * y[1] - 2.0) + 2.0 * a3 * y[0] * y[1];
        let lin: f64 = c.iter().zip(UNSTABLE_MODES).map(|(c, e)| c * e(y, theta)).sum();
        quad + lin
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Outer layers pinned to `sqrt 2 + ansatz(tau)`.
    QuadraticDirichlet(BoundaryAnsatz),
    /// Zero normal derivative by even reflection about the third node.
    Neumann,
}

/// Projects the unstable-mode content of the rate onto its slaved value each step.
#[derive(Clone, Debug)]
struct Recentering {
    weights: Vec<f64>,
    /// Unstable modes restricted to interior lines.
    modes: Vec<Vec<f64>>,
    norms: [f64; 5],
    cumulative: [f64; 5],
}

impl Recentering {
    fn new(grid: &Grid) -> Result<Self> {
        let quad = GaussianQuadrature::for_grid(grid)?;
        let weights = quad.node_weights();
        let nt = grid.n_theta();
        let interior: Vec<bool> = (0..grid.n_lines()).map(|l| !grid.is_edge_line(l, BOUNDARY_LAYERS)).collect();
        let modes: Vec<Vec<f64>> = UNSTABLE_MODES
            .iter()
            .map(|e| {
                let mut f = FlowField::from_fn(grid, e).into_values();
                for (line, keep) in interior.iter().enumerate() {
                    if !keep {
                        f[line * nt..(line + 1) * nt].iter_mut().for_each(|x| *x = 0.0);
                    }
                }
                f
            })
            .collect();
        let norms = std::array::from_fn(|j| modes[j].iter().zip(&weights).map(|(e, w)| w * e * e).sum());
        Ok(Self { weights, modes, norms, cumulative: [0.0; 5] })
    }

    /// Shifts `v` along each unstable mode so that its rate vanishes, and
    /// patches `rate` to first order.
    fn apply(&mut self, v: &mut [f64], rate: &mut [f64]) {
        for j in 0..5 {
            let e = &self.modes[j];
            let r: f64 = e.iter().zip(rate.iter()).zip(&self.weights).map(|((e, r), w)| w * e * r).sum::<f64>()
                / self.norms[j];
            let lambda = UNSTABLE_EIGENVALUES[j];
            let delta = -r / lambda;
            if delta == 0.0 {
                continue;
            }
            for ((x, k), e) in v.iter_mut().zip(rate.iter_mut()).zip(e) {
                *x += delta * e;
                *k += lambda * delta * e;
            }
            self.cumulative[j] += delta;
        }
    }
}

/// RK4 integrator with reusable buffers for one grid.
#[derive(Clone, Debug)]
pub struct FlowSolver {
    grid: Grid,
    policy: BoundaryPolicy,
    engine: DerivativeEngine,
    recentering: Option<Recentering>,
    edge_lines: Vec<usize>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl FlowSolver {
    pub fn new(grid: &Grid, policy: BoundaryPolicy) -> Result<Self> {
        let engine = DerivativeEngine::new(grid)?;
        if let BoundaryPolicy::QuadraticDirichlet(_) = policy {
            grid.spec().require_bubble_sheet("the quadratic Dirichlet policy")?;
        }
        let n = grid.len();
        let edge_lines = (0..grid.n_lines()).filter(|&l| grid.is_edge_line(l, BOUNDARY_LAYERS)).collect();
        Ok(Self {
            grid: grid.clone(),
            policy,
            engine,
            recentering: None,
            edge_lines,
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        })
    }

    /// Enables recentering of the five unstable modes (extinction time and
    /// translations) at every step.
    pub fn with_recentering(mut self) -> Result<Self> {
        self.grid.spec().require_bubble_sheet("unstable-mode recentering")?;
        self.recentering = Some(Recentering::new(&self.grid)?);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn policy(&self) -> &BoundaryPolicy {
        &self.policy
    }

    /// Accumulated recentering shifts of `1, y_1, y_2, cos, sin`.
    pub fn recentering_total(&self) -> Option<[f64; 5]> {
        self.recentering.as_ref().map(|r| r.cumulative)
    }

    /// `dtau` allowed by CFL factor `c`.
    pub fn cfl_step(&self, c: f64) -> f64 {
        let h = self.grid.spacing().expect("uniform grid");
        let ht = SQRT_2 * self.grid.dtheta();
        c * (h * h).min(ht * ht)
    }

    /// Overwrites the boundary layers of `v` for time `tau`.
    pub fn apply_boundary(&self, v: &mut [f64], tau: f64) {
        let nt = self.grid.n_theta();
        match &self.policy {
            BoundaryPolicy::QuadraticDirichlet(ans) => {
                let r = self.grid.spec().base_radius();
                let thetas: Vec<f64> = (0..nt).map(|t| self.grid.theta(t)).collect();
                let (alpha, unstable) = (ans.alpha(tau), ans.unstable(tau));
                for &line in &self.edge_lines {
                    let y = self.grid.line_coords(line);
                    for (t, th) in thetas.iter().enumerate() {
                        v[line * nt + t] = r + BoundaryAnsatz::evaluate(alpha, unstable, y, *th);
                    }
                }
            }
            BoundaryPolicy::Neumann => {
                let n = self.grid.n_y();
                for axis in 0..self.grid.spec().k() {
                    let stride = self.grid.axis_stride(axis);
                    for line in 0..self.grid.n_lines() {
                        let pos = self.grid.axis_position(line, axis);
                        let src_pos = match pos {
                            0 => 4,
                            1 => 3,
                            p if p + 1 == n => n - 5,
                            p if p + 2 == n => n - 4,
                            _ => continue,
                        };
                        let dst = line * nt;
                        let src = dst + src_pos * stride - pos * stride;
                        v.copy_within(src..src + nt, dst);
                    }
                }
            }
        }
    }

    fn rhs(engine: &mut DerivativeEngine, v: &[f64], out: &mut [f64]) {
        evolution_field(engine, v, out);
    }

    /// One classical RK4 step with boundary data re-imposed after each stage.
    pub fn step(&mut self, s: &FlowState, dtau: f64) -> Result<FlowState> {
        if s.graph.grid() != &self.grid {
            return Err(Error::config("state lives on a different grid"));
        }
        if !(dtau > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {dtau}")));
        }
        let limit = self.cfl_step(MAX_CFL);
        if dtau > limit * (1.0 + 1e-12) {
            return Err(Error::config(format!("time step {dtau} exceeds the CFL bound {limit}")));
        }
        let tau = s.tau;
        let mut v = s.graph.values().to_vec();
        Self::rhs(&mut self.engine, &v, &mut self.k[0]);
        if let Some(rc) = self.recentering.as_mut() {
            rc.apply(&mut v, &mut self.k[0]);
        }
        for (i, c) in [(0usize, 0.5), (1, 0.5), (2, 1.0)] {
            let kp = &self.k[i];
            self.stage.par_iter_mut().zip(&v).zip(kp).for_each(|((w, x), k)| *w = x + c * dtau * k);
            self.apply_boundary_in_place(tau + c * dtau);
            Self::rhs(&mut self.engine, &self.stage, &mut self.k[i + 1]);
        }
        let [k1, k2, k3, k4] = &self.k;
        let h6 = dtau / 6.0;
        v.par_iter_mut()
            .zip(k1)
            .zip(k2)
            .zip(k3.par_iter().zip(k4))
            .for_each(|(((x, a), b), (c, d))| *x += h6 * (a + 2.0 * (b + c) + d));
        let tau1 = tau + dtau;
        self.apply_boundary(&mut v, tau1);
        if let Some((node, &value)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
            return Err(Error::BlowUp { tau: tau1, node, value });
        }
        let field = FlowField::new(self.grid.clone(), v)?;
        Ok(FlowState { tau: tau1, graph: CylinderGraph::new(field)? })
    }

    fn apply_boundary_in_place(&mut self, tau: f64) {
        let mut stage = std::mem::take(&mut self.stage);
        self.apply_boundary(&mut stage, tau);
        self.stage = stage;
    }

    /// Imposes the boundary data on an initial state.
    pub fn prepare(&self, s: FlowState) -> Result<FlowState> {
        let mut v = s.graph.into_field().into_values();
        self.apply_boundary(&mut v, s.tau);
        let field = FlowField::new(self.grid.clone(), v)?;
        FlowState::new(s.tau, CylinderGraph::new(field)?)
    }
}

/// Gaussian area split into the part computed on the box and the cylinder
/// value of the region outside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianArea {
    pub interior: f64,
    pub tail: f64,
}

impl GaussianArea {
    pub fn total(&self) -> f64 {
        self.interior + self.tail
    }
}

/// `F = (4 pi)^(-n/2) int exp(-(|y|^2 + v^2)/4) |N| dy dtheta` over the box
/// (trapezoid rule), plus the round-cylinder contribution outside it.
pub fn gaussian_area(g: &CylinderGraph) -> Result<GaussianArea> {
    let mut engine = DerivativeEngine::new(g.grid())?;
    gaussian_area_with(&mut engine, g)
}

pub(crate) fn gaussian_area_with(engine: &mut DerivativeEngine, g: &CylinderGraph) -> Result<GaussianArea> {
    let grid = g.grid().clone();
    let spec = grid.spec();
    let k = spec.k();
    let n_dim = (k + spec.m()) as f64;
    let h = grid.require_spacing()?;
    let mut dens = vec![0.0; grid.len()];
    pointwise(engine, g.values(), &mut dens, |j| {
        let r2: f64 = j.z[..k].iter().map(|z| z * z).sum::<f64>() + j.v * j.v;
        (-r2 / 4.0).exp() * j.normal_length(spec)
    });
    let n = grid.n_y();
    let w1 = |i: usize| if i == 0 || i + 1 == n { 0.5 * h } else { h };
    let nt = grid.n_theta();
    let mut total = 0.0;
    for line in 0..grid.n_lines() {
        let (i, j) = grid.line_index(line);
        let w = if k == 1 { w1(i) } else { w1(i) * w1(j) };
        total += w * dens[line * nt..(line + 1) * nt].iter().sum::<f64>();
    }
    let interior = (4.0 * PI).powf(-n_dim / 2.0) * total * grid.dtheta();
    let r = grid.half_width();
    let tail = unit_norm_squared() * (1.0 - erf(r / 2.0).powi(k as i32));
    Ok(GaussianArea { interior, tail })
}

fn erf(x: f64) -> f64 {
    statrs::function::erf::erf(x)
}

/// Reduced diagnostics recorded at each sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub modes: ModeState,
    /// Trace `S = alpha_1 + alpha_2` and determinant `D = alpha_1 alpha_2 - alpha_3^2`.
    pub trace: f64,
    pub det: f64,
    /// `x = sqrt 2 tau S`, `y = 8 tau^2 D`.
    pub x: f64,
    pub y: f64,
    pub gaussian_area: f64,
    /// `sup |u_theta|` over the graphical radius.
    pub theta_defect: f64,
}

impl FlowSample {
    pub fn tau(&self) -> f64 {
        self.modes.tau
    }
}

/// Sample-time diagnostics for one grid.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    projector: ModeProjector,
    engine: DerivativeEngine,
    truncation: Option<f64>,
    norms: Vec<(f64, f64)>,
}

impl Diagnostics {
    /// `truncation` is the cutoff radius used before projecting; `None` projects
    /// the whole box.
    pub fn new(grid: &Grid, truncation: Option<f64>) -> Result<Self> {
        Ok(Self {
            projector: ModeProjector::for_grid(grid)?,
            engine: DerivativeEngine::new(grid)?,
            truncation,
            norms: Vec::new(),
        })
    }

    pub fn projector(&self) -> &ModeProjector {
        &self.projector
    }

    pub fn sample(&mut self, s: &FlowState) -> Result<FlowSample> {
        let u = s.graph.deviation();
        let u_hat = match self.truncation {
            Some(rho) => truncate(&u, rho)?,
            None => u.clone(),
        };
        let modes = self.projector.coefficients(&u_hat, s.tau)?;
        self.norms.push((s.tau, modes.weighted_norm()));
        let (_, rho) = beta_and_radius(&self.norms, s.tau)?;
        let [a1, a2, a3, ..] = modes.alpha;
        let trace = a1 + a2;
        let det = a1 * a2 - a3 * a3;
        let area = gaussian_area_with(&mut self.engine, &s.graph)?;
        Ok(FlowSample {
            modes,
            trace,
            det,
            x: SQRT_2 * s.tau * trace,
            y: 8.0 * s.tau * s.tau * det,
            gaussian_area: area.total(),
            theta_defect: theta_defect(&u, rho),
        })
    }
}

/// Time discretization of a run: `n_samples` intervals of `steps_per_sample`
/// equal steps, so samples fall exactly on `tau0 + i (tau1 - tau0) / n_samples`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePlan {
    pub tau0: f64,
    pub tau1: f64,
    pub n_samples: usize,
    pub steps_per_sample: usize,
}

impl TimePlan {
    /// Smallest plan with sample spacing about `interval` and steps no longer than `max_dtau`.
    pub fn new(tau0: f64, tau1: f64, interval: f64, max_dtau: f64) -> Result<Self> {
        if !(tau0 < tau1) {
            return Err(Error::config(format!("need tau0 < tau1, got {tau0} and {tau1}")));
        }
        if !(interval > 0.0 && max_dtau > 0.0) {
            return Err(Error::config("sample interval and step must be positive"));
        }
        let n_samples = ((tau1 - tau0) / interval).round().max(1.0) as usize;
        let spacing = (tau1 - tau0) / n_samples as f64;
        let steps_per_sample = (spacing / max_dtau).ceil().max(1.0) as usize;
        Ok(Self { tau0, tau1, n_samples, steps_per_sample })
    }

    pub fn dtau(&self) -> f64 {
        (self.tau1 - self.tau0) / (self.n_samples * self.steps_per_sample) as f64
    }

    pub fn total_steps(&self) -> usize {
        self.n_samples * self.steps_per_sample
    }

    /// Time after `step` steps (computed directly, not accumulated).
    pub fn time(&self, step: usize) -> f64 {
        if step == self.total_steps() {
            self.tau1
        } else {
            self.tau0 + step as f64 * self.dtau()
        }
    }
}

/// Recorded run: samples at uniform spacing, possibly cut short by blow-up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowHistory {
    pub samples: Vec<FlowSample>,
    /// True if the run stopped before `tau1`.
    pub partial: bool,
    pub failure: Option<String>,
}

impl FlowHistory {
    pub fn modes(&self) -> Vec<ModeState> {
        self.samples.iter().map(|s| s.modes).collect()
    }

    /// Largest increase of `F` between consecutive samples (zero if monotone).
    pub fn area_increase(&self) -> f64 {
        self.samples.windows(2).map(|w| w[1].gaussian_area - w[0].gaussian_area).fold(0.0, f64::max)
    }
}

/// Integrates from `init` along `plan`, sampling diagnostics at every sample
/// time (including the initial one) and handing each sampled state to
/// `observe`. A blow-up truncates the history and marks it partial; other
/// errors propagate. Returns the history and the last state reached.
pub fn run_flow(
    solver: &mut FlowSolver,
    init: FlowState,
    plan: &TimePlan,
    diagnostics: &mut Diagnostics,
    mut observe: impl FnMut(&FlowState, &FlowSample) -> Result<()>,
) -> Result<(FlowHistory, FlowState)> {
    if (init.tau - plan.tau0).abs() > 1e-12 * plan.tau0.abs().max(1.0) {
        return Err(Error::config("initial state does not start at the plan's tau0"));
    }
    let mut state = solver.prepare(FlowState { tau: plan.tau0, ..init })?;
    let mut history = FlowHistory { samples: Vec::with_capacity(plan.n_samples + 1), partial: false, failure: None };
    let record = |state: &FlowState, history: &mut FlowHistory, diag: &mut Diagnostics, obs: &mut dyn FnMut(&FlowState, &FlowSample) -> Result<()>| -> Result<()> {
        let sample = diag.sample(state)?;
        obs(state, &sample)?;
        history.samples.push(sample);
        Ok(())
    };
    record(&state, &mut history, diagnostics, &mut observe)?;
    let dtau = plan.dtau();
    for i in 0..plan.n_samples {
        for j in 0..plan.steps_per_sample {
            let n = i * plan.steps_per_sample + j;
            let target = plan.time(n + 1);
            match solver.step(&state, dtau) {
                Ok(mut next) => {
                    next.tau = target;
                    state = next;
                }
                Err(e @ Error::BlowUp { .. }) => {
                    history.partial = true;
                    history.failure = Some(e.to_string());
                    return Ok((history, state));
                }
                Err(e) => return Err(e),
            }
        }
        record(&state, &mut history, diagnostics, &mut observe)?;
    }
    Ok((history, state))
}
