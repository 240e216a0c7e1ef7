//! The Gaussian Hilbert space on the bubble-sheet and the spectral bookkeeping
//! built on it: quadrature, truncation, eigenfunction projections, mode
//! energies, the Merle-Zaag classifier, the graphical radius and the angular
//! symmetry defect.
//!
//! The inner product is
//! `<f, g> = (4 pi)^(-3/2) int_Gamma f g exp(-|q|^2 / 4) dq` with
//! `|q|^2 = |y|^2 + 2` on `Gamma = R^2 x S^1(sqrt 2)`, so that for
//! angle-independent functions it reduces to
//! `(8 e pi)^(-1/2) int_{R^2} f g exp(-|y|^2 / 4) dy`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::derivatives::{theta_derivative, Order};
use crate::error::{Error, Result};
use crate::grid::{CylinderSpec, FlowField, Grid};

/// Angle-independent normalization `(4 pi)^(-3/2) e^(-1/2) sqrt 2 = (8 e pi)^(-1/2)`.
pub fn reduced_prefactor() -> f64 {
    1.0 / (8.0 * std::f64::consts::E * PI).sqrt()
}

/// `<1, 1> = sqrt(2 pi / e)`.
pub fn unit_norm_squared() -> f64 {
    (2.0 * PI / std::f64::consts::E).sqrt()
}

/// Node/weight rule for the Gaussian inner product on a tensor grid.
#[derive(Clone, Debug)]
pub struct GaussianQuadrature {
    grid: Grid,
    /// Flat weights including the factor `exp(-y^2/4)`.
    weights: Vec<f64>,
    exact_degree: Option<usize>,
}

impl GaussianQuadrature {
    /// Gauss-Hermite rule for the weight `exp(-y^2/4)` with `n_q >= 8` nodes per
    /// flat axis (exact through polynomial degree `2 n_q - 1`) and a uniform
    /// angular rule with `n_theta` nodes.
    pub fn gauss_hermite(n_q: usize, n_theta: usize) -> Result<Self> {
        if n_q < 8 {
            return Err(Error::config(format!("Gauss-Hermite rule needs at least 8 nodes, got {n_q}")));
        }
        let (x, w) = hermite_rule(n_q);
        // y = 2x:  int f(y) e^{-y^2/4} dy = 2 int f(2x) e^{-x^2} dx
        let ys = x.iter().map(|x| 2.0 * x).collect();
        let weights: Vec<f64> = w.iter().map(|w| 2.0 * w).collect();
        let grid = Grid::with_nodes(CylinderSpec::BUBBLE_SHEET, ys, n_theta)?;
        let q = Self { grid, weights, exact_degree: Some(2 * n_q - 1) };
        q.self_test()?;
        Ok(q)
    }

    /// Composite trapezoid rule on a uniform simulation grid. The Gaussian weight
    /// makes this spectrally accurate up to the truncation of the box; no
    /// polynomial exactness is claimed.
    pub fn for_grid(grid: &Grid) -> Result<Self> {
        grid.spec().require_bubble_sheet("the Gaussian inner product")?;
        let h = grid.require_spacing()?;
        let n = grid.n_y();
        let weights = grid
            .ys()
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let end = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
                end * h * (-y * y / 4.0).exp()
            })
            .collect();
        Ok(Self { grid: grid.clone(), weights, exact_degree: None })
    }

    fn self_test(&self) -> Result<()> {
        let Some(deg) = self.exact_degree else { return Ok(()) };
        for p in 0..=deg {
            let got: f64 = self.grid.ys().iter().zip(&self.weights).map(|(y, w)| w * y.powi(p as i32)).sum();
            let exact = flat_moment(p);
            let scale = flat_moment(p + p % 2).max(1.0);
            if (got - exact).abs() > 1e-11 * scale {
                return Err(Error::config(format!(
                    "quadrature self-test failed for y^{p}: {got} vs {exact}"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn flat_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_degree(&self) -> Option<usize> {
        self.exact_degree
    }

    /// Weight attached to every node (including the global normalization).
    pub fn node_weights(&self) -> Vec<f64> {
        let nt = self.grid.n_theta();
        let c = (4.0 * PI).powf(-1.5) * (-0.5f64).exp() * SQRT_2 * self.grid.dtheta();
        let n = self.grid.n_y();
        let mut out = Vec::with_capacity(self.grid.len());
        for i in 0..n {
            for j in 0..n {
                let w = c * self.weights[i] * self.weights[j];
                out.extend(std::iter::repeat(w).take(nt));
            }
        }
        out
    }

    /// `<f, g>` for fields sampled on this rule's nodes.
    pub fn inner(&self, f: &FlowField, g: &FlowField) -> Result<f64> {
        if f.grid() != &self.grid || g.grid() != &self.grid {
            return Err(Error::config("field is not sampled on the quadrature grid"));
        }
        Ok(self.weighted_sum(f.values(), g.values()))
    }

    fn weighted_sum(&self, f: &[f64], g: &[f64]) -> f64 {
        let nt = self.grid.n_theta();
        let n = self.grid.n_y();
        let c = (4.0 * PI).powf(-1.5) * (-0.5f64).exp() * SQRT_2 * self.grid.dtheta();
        let mut total = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let line = (i * n + j) * nt;
                let s: f64 = f[line..line + nt].iter().zip(&g[line..line + nt]).map(|(a, b)| a * b).sum();
                row += self.weights[j] * s;
            }
            total += self.weights[i] * row;
        }
        c * total
    }

    /// `<f, g>` for functions of `(y, theta)`.
    pub fn inner_fn(&self, f: impl Fn([f64; 2], f64) -> f64, g: impl Fn([f64; 2], f64) -> f64) -> f64 {
        let ff = FlowField::from_fn(&self.grid, f);
        let gg = FlowField::from_fn(&self.grid, g);
        self.weighted_sum(ff.values(), gg.values())
    }

    pub fn norm_squared(&self, f: &FlowField) -> Result<f64> {
        self.inner(f, f)
    }
}

/// `int y^p exp(-y^2/4) dy` over the real line.
fn flat_moment(p: usize) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    // 2^{p+1} Gamma((p+1)/2) with Gamma(1/2) = sqrt(pi)
    let mut g = PI.sqrt();
    let mut s = 0.5;
    while s < (p as f64 + 1.0) / 2.0 {
        g *= s;
        s += 1.0;
    }
    2f64.powi(p as i32 + 1) * g
}

/// Gauss-Hermite nodes and weights for `exp(-x^2)` (Golub-Welsch).
pub fn hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize to remove eigensolver noise
    let mut x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xs = 0.5 * (x[j] - x[i]);
        let ws = 0.5 * (w[i] + w[j]);
        x[i] = -xs;
        x[j] = xs;
        w[i] = ws;
        w[j] = ws;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

pub type Mode = fn([f64; 2], f64) -> f64;

/// `1, y_1, y_2, cos theta, sin theta` (eigenvalues `1, 1/2, 1/2, 1/2, 1/2`).
pub const UNSTABLE_MODES: [Mode; 5] = [
    |_, _| 1.0,
    |y, _| y[0],
    |y, _| y[1],
    |_, t| t.cos(),
    |_, t| t.sin(),
];

/// Eigenvalues of `L` on [`UNSTABLE_MODES`].
pub const UNSTABLE_EIGENVALUES: [f64; 5] = [1.0, 0.5, 0.5, 0.5, 0.5];

/// `psi_1 .. psi_7`: `y_1^2 - 2, y_2^2 - 2, 2 y_1 y_2, y_1 cos, y_1 sin, y_2 cos, y_2 sin`.
pub const NEUTRAL_MODES: [Mode; 7] = [
    |y, _| y[0] * y[0] - 2.0,
    |y, _| y[1] * y[1] - 2.0,
    |y, _| 2.0 * y[0] * y[1],
    |y, t| y[0] * t.cos(),
    |y, t| y[0] * t.sin(),
    |y, t| y[1] * t.cos(),
    |y, t| y[1] * t.sin(),
];

/// Smooth cutoff: 1 on `|s| <= 1/2`, 0 on `|s| >= 1`, and in between
/// `1 - S(2|s| - 1)` with the quintic smoothstep `S(x) = 10x^3 - 15x^4 + 6x^5`.
pub fn cutoff(s: f64) -> f64 {
    let s = s.abs();
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let x = 2.0 * s - 1.0;
        1.0 - x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

/// `u_hat = u chi(|y| / rho)`.
pub fn truncate(u: &FlowField, rho: f64) -> Result<FlowField> {
    if !(rho > 0.0) {
        return Err(Error::input(format!("truncation radius must be positive, got {rho}")));
    }
    let grid = u.grid();
    let nt = grid.n_theta();
    let mut out = u.values().to_vec();
    for line in 0..grid.n_lines() {
        let y = grid.line_coords(line);
        let c = cutoff((y[0] * y[0] + y[1] * y[1]).sqrt() / rho);
        if c != 1.0 {
            out[line * nt..(line + 1) * nt].iter_mut().for_each(|x| *x *= c);
        }
    }
    FlowField::new(grid.clone(), out)
}

/// Spectral coefficients and mode energies of a truncated bubble-sheet function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub tau: f64,
    /// `alpha_j = <psi_j, u_hat> / |psi_j|^2`, `j = 1..7`.
    pub alpha: [f64; 7],
    pub u_plus: f64,
    pub u_zero: f64,
    pub u_minus: f64,
}

impl ModeState {
    /// `|u_hat|^2`.
    pub fn total(&self) -> f64 {
        self.u_plus + self.u_zero + self.u_minus
    }

    /// Unnormalized truncated Gaussian norm `(int u_hat^2 e^{-|q|^2/4})^{1/2}`.
    pub fn weighted_norm(&self) -> f64 {
        (4.0 * PI).powf(0.75) * self.total().sqrt()
    }
}

/// Projects fields on one grid onto the twelve tracked eigenfunctions.
#[derive(Clone, Debug)]
pub struct ModeProjector {
    quad: GaussianQuadrature,
    unstable: Vec<(FlowField, f64)>,
    neutral: Vec<(FlowField, f64)>,
}

impl ModeProjector {
    pub fn new(quad: GaussianQuadrature) -> Self {
        let sample = |m: &Mode| {
            let f = FlowField::from_fn(quad.grid(), m);
            let n = quad.weighted_sum(f.values(), f.values());
            (f, n)
        };
        let unstable = UNSTABLE_MODES.iter().map(sample).collect();
        let neutral = NEUTRAL_MODES.iter().map(sample).collect();
        Self { quad, unstable, neutral }
    }

    pub fn for_grid(grid: &Grid) -> Result<Self> {
        Ok(Self::new(GaussianQuadrature::for_grid(grid)?))
    }

    pub fn quadrature(&self) -> &GaussianQuadrature {
        &self.quad
    }

    /// `|psi_j|^2` on this rule.
    pub fn neutral_norms(&self) -> [f64; 7] {
        std::array::from_fn(|j| self.neutral[j].1)
    }

    pub fn coefficients(&self, u_hat: &FlowField, tau: f64) -> Result<ModeState> {
        if u_hat.grid() != self.quad.grid() {
            return Err(Error::config("field is not sampled on the projector grid"));
        }
        let u = u_hat.values();
        let total = self.quad.weighted_sum(u, u);
        let u_plus: f64 = self
            .unstable
            .iter()
            .map(|(e, n)| {
                let c = self.quad.weighted_sum(e.values(), u);
                c * c / n
            })
            .sum();
        let mut alpha = [0.0; 7];
        let mut u_zero = 0.0;
        for (a, (e, n)) in alpha.iter_mut().zip(&self.neutral) {
            let c = self.quad.weighted_sum(e.values(), u);
            *a = c / n;
            u_zero += c * c / n;
        }
        let u_minus = (total - u_plus - u_zero).max(0.0);
        Ok(ModeState { tau, alpha, u_plus, u_zero, u_minus })
    }
}

/// Outcome of the finite-horizon Merle-Zaag dichotomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dominance {
    NeutralDominant,
    UnstableDominant,
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MerleZaagVerdict {
    pub verdict: Dominance,
    pub threshold: f64,
    /// Largest `(U+ + U-) / U0` over the window.
    pub neutral_ratio: f64,
    /// Largest `(U0 + U-) / U+` over the window.
    pub unstable_ratio: f64,
    pub window: usize,
}

pub const MZ_THRESHOLD: f64 = 0.2;
pub const MZ_WINDOW_FRACTION: f64 = 0.25;

/// Classifies a history of mode energies. The dominance ratio must stay below
/// [`MZ_THRESHOLD`] over the trailing quarter of the samples; for the neutral
/// verdict the ratio must also decrease towards `tau -> -infinity` across
/// that window.
pub fn merle_zaag_classify(samples: &[ModeState]) -> Result<MerleZaagVerdict> {
    if samples.is_empty() {
        return Err(Error::input("empty history"));
    }
    if samples.len() < 10 {
        return Err(Error::input(format!("need at least 10 samples, got {}", samples.len())));
    }
    let window = ((samples.len() as f64 * MZ_WINDOW_FRACTION).ceil() as usize).max(2);
    let tail = &samples[samples.len() - window..];
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    let neutral: Vec<f64> = tail.iter().map(|s| ratio(s.u_plus + s.u_minus, s.u_zero)).collect();
    let unstable: Vec<f64> = tail.iter().map(|s| ratio(s.u_zero + s.u_minus, s.u_plus)).collect();
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let (nmax, umax) = (max(&neutral), max(&unstable));
    let verdict = if nmax < MZ_THRESHOLD && neutral[0] <= neutral[window - 1] {
        Dominance::NeutralDominant
    } else if umax < MZ_THRESHOLD {
        Dominance::UnstableDominant
    } else {
        Dominance::Undetermined
    };
    Ok(MerleZaagVerdict { verdict, threshold: MZ_THRESHOLD, neutral_ratio: nmax, unstable_ratio: umax, window })
}

/// `beta(tau) = sup_{sigma <= tau} norm(sigma)` and `rho = beta^(-1/5)` from a
/// recorded `(sigma, norm)` series.
pub fn beta_and_radius(norms: &[(f64, f64)], tau: f64) -> Result<(f64, f64)> {
    let first = norms.first().ok_or_else(|| Error::input("empty history"))?;
    if tau < first.0 {
        return Err(Error::input(format!("tau = {tau} precedes the history start {}", first.0)));
    }
    let beta = norms.iter().take_while(|(s, _)| *s <= tau).map(|(_, n)| *n).fold(0.0, f64::max);
    Ok((beta, beta.powf(-0.2)))
}

/// `sup_{|y| <= rho} |u_theta|` by spectral differentiation.
pub fn theta_defect(u: &FlowField, rho: f64) -> f64 {
    let ut = theta_derivative(u, Order::First);
    ut.max_abs_where(|y| (y[0] * y[0] + y[1] * y[1]).sqrt() <= rho)
}
