//! The renormalized graphical mean curvature flow over `R^k x S^1`.
//!
//! A hypersurface is written as `(z, v(z, omega) omega)`. Its normal velocity under
//! the renormalized flow `d/dtau x = H_vec + x_perp / 2`, projected onto the radial
//! direction, gives
//!
//! ```text
//! dv/dtau = [A_ab d_a d_b v + B v_tt - 2 d_a v v_t d_a v_t - v_t^2 / v] / |N|^2
//!           - m / v + (v - z_a d_a v) / 2
//! A_ab   = |N|^2 delta_ab - v^2 d_a v d_b v,      B = 1 + |dv|^2
//! |N|^2  = (1 + |dv|^2) v^2 + v_t^2
//! ```
//!
//! and the mean curvature satisfies `-|N| H / v = [...] / |N|^2 - m / v`.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;

use crate::derivatives::{DerivativeEngine, Jets};
use crate::error::Result;
use crate::grid::{CylinderGraph, CylinderSpec, FlowField};

/// Derivatives of `v` at one node. Unused flat slots are zero when `k = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LocalJet {
    pub v: f64,
    pub grad: [f64; 2],
    /// `[[v_11, v_12], [v_12, v_22]]`
    pub hess: [[f64; 2]; 2],
    pub v_t: f64,
    pub v_tt: f64,
    pub grad_t: [f64; 2],
    pub z: [f64; 2],
}

impl LocalJet {
    pub(crate) fn gather(jets: &Jets, v: &[f64], z: [f64; 2], idx: usize) -> Self {
        Self {
            v: v[idx],
            grad: [jets.d[0][idx], jets.d[1][idx]],
            hess: [[jets.dd[0][idx], jets.dd[2][idx]], [jets.dd[2][idx], jets.dd[1][idx]]],
            v_t: jets.t[idx],
            v_tt: jets.tt[idx],
            grad_t: [jets.dt[0][idx], jets.dt[1][idx]],
            z,
        }
    }

    /// `(numerator, |N|^2)` of the quotient term.
    #[inline]
    fn quotient(&self, k: usize) -> (f64, f64) {
        let v = self.v;
        let v2 = v * v;
        let g2: f64 = self.grad[..k].iter().map(|p| p * p).sum();
        let w = self.v_t * self.v_t;
        let n2 = (1.0 + g2) * v2 + w;
        let mut a_term = 0.0;
        let mut mixed = 0.0;
        for a in 0..k {
            for b in 0..k {
                let delta = if a == b { n2 } else { 0.0 };
                a_term += (delta - v2 * self.grad[a] * self.grad[b]) * self.hess[a][b];
            }
            mixed += self.grad[a] * self.v_t * self.grad_t[a];
        }
        let b_term = (1.0 + g2) * self.v_tt;
        (a_term + b_term - 2.0 * mixed - w / v, n2)
    }

    /// Renormalized flow speed `dv/dtau`.
    #[inline]
    pub fn evolution(&self, spec: CylinderSpec) -> f64 {
        let k = spec.k();
        let (num, n2) = self.quotient(k);
        let drift: f64 = (0..k).map(|a| self.z[a] * self.grad[a]).sum();
        num / n2 - spec.m() as f64 / self.v + 0.5 * (self.v - drift)
    }

    /// Mean curvature with respect to the outward normal.
    #[inline]
    pub fn mean_curvature(&self, spec: CylinderSpec) -> f64 {
        let (num, n2) = self.quotient(spec.k());
        debug_assert!(n2 >= self.v * self.v);
        -(self.v / n2.sqrt()) * (num / n2 - spec.m() as f64 / self.v)
    }

    /// `|N| = sqrt((1 + |dv|^2) v^2 + v_t^2)`.
    pub fn normal_length(&self, spec: CylinderSpec) -> f64 {
        self.quotient(spec.k()).1.sqrt()
    }
}

/// Pointwise kernel shared by the graph operators.
pub(crate) fn pointwise(
    engine: &mut DerivativeEngine,
    v: &[f64],
    out: &mut [f64],
    f: impl Fn(&LocalJet) -> f64 + Sync,
) {
    let grid = engine.grid().clone();
    let jets = engine.compute(v);
    let nt = grid.n_theta();
    out.par_chunks_mut(nt).enumerate().for_each(|(line, o)| {
        let z = grid.line_coords(line);
        for (t, x) in o.iter_mut().enumerate() {
            *x = f(&LocalJet::gather(jets, v, z, line * nt + t));
        }
    });
}

fn graph_op(g: &CylinderGraph, f: impl Fn(&LocalJet) -> f64 + Sync) -> Result<FlowField> {
    let mut engine = DerivativeEngine::new(g.grid())?;
    let mut out = vec![0.0; g.grid().len()];
    pointwise(&mut engine, g.values(), &mut out, f);
    FlowField::new(g.grid().clone(), out)
}

/// Line-oriented form of [`LocalJet::evolution`] used by the time stepper.
/// Unused slots of the jets are zero when `k = 1`, so one kernel serves both.
pub(crate) fn evolution_field(engine: &mut DerivativeEngine, v: &[f64], out: &mut [f64]) {
    let grid = engine.grid().clone();
    let m = grid.spec().m() as f64;
    let jets = engine.compute(v);
    let nt = grid.n_theta();
    out.par_chunks_mut(nt).enumerate().for_each(|(line, o)| {
        let z = grid.line_coords(line);
        let r = line * nt..(line + 1) * nt;
        let (v, p1, p2) = (&v[r.clone()], &jets.d[0][r.clone()], &jets.d[1][r.clone()]);
        let (h11, h22, h12) = (&jets.dd[0][r.clone()], &jets.dd[1][r.clone()], &jets.dd[2][r.clone()]);
        let (vt, vtt) = (&jets.t[r.clone()], &jets.tt[r.clone()]);
        let (p1t, p2t) = (&jets.dt[0][r.clone()], &jets.dt[1][r]);
        for t in 0..nt {
            let inv_v = 1.0 / v[t];
            let v2 = v[t] * v[t];
            let g2 = p1[t] * p1[t] + p2[t] * p2[t];
            let w = vt[t] * vt[t];
            let n2 = (1.0 + g2) * v2 + w;
            let a = (n2 - v2 * p1[t] * p1[t]) * h11[t] + (n2 - v2 * p2[t] * p2[t]) * h22[t]
                - 2.0 * v2 * p1[t] * p2[t] * h12[t];
            let mixed = vt[t] * (p1[t] * p1t[t] + p2[t] * p2t[t]);
            let num = a + (1.0 + g2) * vtt[t] - 2.0 * mixed - w * inv_v;
            o[t] = num / n2 - m * inv_v + 0.5 * (v[t] - z[0] * p1[t] - z[1] * p2[t]);
        }
    });
}

/// `dv/dtau` at every node.
pub fn evolution_rhs(g: &CylinderGraph) -> Result<FlowField> {
    let mut engine = DerivativeEngine::new(g.grid())?;
    let mut out = vec![0.0; g.grid().len()];
    evolution_field(&mut engine, g.values(), &mut out);
    FlowField::new(g.grid().clone(), out)
}

/// Mean curvature at every node.
pub fn mean_curvature(g: &CylinderGraph) -> Result<FlowField> {
    let spec = g.spec();
    graph_op(g, |j| j.mean_curvature(spec))
}

/// The linearization at the round bubble-sheet,
/// `L = d_11 - y_1/2 d_1 + d_22 - y_2/2 d_2 + 1/2 d_tt + 1`.
pub fn ou_apply(u: &FlowField) -> Result<FlowField> {
    u.grid().spec().require_bubble_sheet("the Ornstein-Uhlenbeck operator")?;
    let mut engine = DerivativeEngine::new(u.grid())?;
    let mut out = vec![0.0; u.grid().len()];
    pointwise(&mut engine, u.values(), &mut out, |j| {
        j.hess[0][0] - 0.5 * j.z[0] * j.grad[0] + j.hess[1][1] - 0.5 * j.z[1] * j.grad[1]
            + 0.5 * j.v_tt
            + j.v
    });
    FlowField::new(u.grid().clone(), out)
}

/// Quadratic part of the flow at the bubble-sheet,
/// `Q(u) = -u^2/sqrt 8 - u_t^2/sqrt 8 - u u_tt / sqrt 2`.
pub fn quadratic_form(u: &FlowField) -> Result<FlowField> {
    u.grid().spec().require_bubble_sheet("the quadratic form")?;
    let s8 = 8f64.sqrt();
    let mut engine = DerivativeEngine::new(u.grid())?;
    let mut out = vec![0.0; u.grid().len()];
    pointwise(&mut engine, u.values(), &mut out, |j| {
        -j.v * j.v / s8 - j.v_t * j.v_t / s8 - j.v * j.v_tt / SQRT_2
    });
    FlowField::new(u.grid().clone(), out)
}

/// Remainder `E = rhs(sqrt 2 + u) - L u - Q(u)`; cubic in `u`.
pub fn expansion_residual(u: &FlowField) -> Result<FlowField> {
    u.grid().spec().require_bubble_sheet("the expansion residual")?;
    let g = CylinderGraph::from_deviation(u)?;
    let rhs = evolution_rhs(&g)?;
    let lin = ou_apply(u)?;
    let quad = quadratic_form(u)?;
    let vals = rhs
        .values()
        .iter()
        .zip(lin.values())
        .zip(quad.values())
        .map(|((r, l), q)| r - l - q)
        .collect();
    FlowField::new(u.grid().clone(), vals)
}

/// `|N|` at every node.
pub fn normal_length(g: &CylinderGraph) -> Result<FlowField> {
    let spec = g.spec();
    graph_op(g, |j| j.normal_length(spec))
}

/// Checks `dv/dtau <omega, nu> = <-H nu + F/2, nu>` at every node and returns
/// the largest violation.
pub fn normal_velocity_identity_defect(g: &CylinderGraph) -> Result<f64> {
    let spec = g.spec();
    let field = graph_op(g, |j| {
        let n = j.normal_length(spec);
        let drift: f64 = (0..spec.k()).map(|a| j.z[a] * j.grad[a]).sum();
        let lhs = j.evolution(spec) * j.v / n;
        let rhs = -j.mean_curvature(spec) + (j.v * j.v - j.v * drift) / (2.0 * n);
        lhs - rhs
    })?;
    Ok(field.max_abs())
}
