//! Derivative stencils: fourth-order finite differences along the flat axes and
//! trigonometric (spectral) differentiation in the angle.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{FlowField, Grid};

/// Which derivative a stencil approximates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

/// Six-point window `(first node, weights)` approximating a derivative at node `i`
/// of an `n`-point uniform axis with unit spacing. Central five-point stencils in
/// the interior; fourth-order one-sided stencils on the two outermost nodes.
pub fn stencil(order: Order, i: usize, n: usize) -> (usize, [f64; 6]) {
    const C1: [f64; 6] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0, 0.0];
    const C2: [f64; 6] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0, 0.0];
    const L1_0: [f64; 6] = [-25.0 / 12.0, 48.0 / 12.0, -36.0 / 12.0, 16.0 / 12.0, -3.0 / 12.0, 0.0];
    const L1_1: [f64; 6] = [-3.0 / 12.0, -10.0 / 12.0, 18.0 / 12.0, -6.0 / 12.0, 1.0 / 12.0, 0.0];
    const L2_0: [f64; 6] = [
        45.0 / 12.0,
        -154.0 / 12.0,
        214.0 / 12.0,
        -156.0 / 12.0,
        61.0 / 12.0,
        -10.0 / 12.0,
    ];
    const L2_1: [f64; 6] =
        [10.0 / 12.0, -15.0 / 12.0, -4.0 / 12.0, 14.0 / 12.0, -6.0 / 12.0, 1.0 / 12.0];

    let (left0, left1, central) = match order {
        Order::First => (L1_0, L1_1, C1),
        Order::Second => (L2_0, L2_1, C2),
    };
    // mirrored one-sided stencils pick up a sign for odd derivatives
    let sign = if order == Order::First { -1.0 } else { 1.0 };
    let mirror = |w: [f64; 6]| {
        let mut r = [0.0; 6];
        for (k, c) in w.iter().enumerate() {
            r[5 - k] = sign * c;
        }
        r
    };
    if i == 0 {
        (0, left0)
    } else if i == 1 {
        (0, left1)
    } else if i + 1 == n {
        (n - 6, mirror(left0))
    } else if i + 2 == n {
        (n - 6, mirror(left1))
    } else {
        (i - 2, central)
    }
}

/// Trigonometric differentiation matrices on `n` equispaced angles (row-major).
#[derive(Clone, Debug)]
pub struct AngularDiff {
    n: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl AngularDiff {
    pub fn new(n: usize) -> Self {
        let h = 2.0 * PI / n as f64;
        let mut d1 = vec![0.0; n * n];
        let mut d2 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i as isize - j as isize;
                if k == 0 {
                    d2[i * n + j] = -PI * PI / (3.0 * h * h) - 1.0 / 6.0;
                } else {
                    let sgn = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    let x = k as f64 * h / 2.0;
                    d1[i * n + j] = 0.5 * sgn / x.tan();
                    d2[i * n + j] = -0.5 * sgn / (x.sin() * x.sin());
                }
            }
        }
        // stored column-major; d2 is symmetric, d1 antisymmetric
        let d1 = d1.iter().map(|x| -x).collect();
        Self { n, d1, d2 }
    }

    /// `out = M line` with `M` stored column-major; rows are processed in
    /// register-sized blocks so the inner loop vectorizes.
    fn apply(m: &[f64], n: usize, line: &[f64], out: &mut [f64]) {
        const B: usize = 8;
        let mut i0 = 0;
        while i0 + B <= n {
            let mut acc = [0.0; B];
            for (j, &x) in line.iter().enumerate() {
                let col: &[f64; B] = m[j * n + i0..j * n + i0 + B].try_into().unwrap();
                for k in 0..B {
                    acc[k] += col[k] * x;
                }
            }
            out[i0..i0 + B].copy_from_slice(&acc);
            i0 += B;
        }
        for i in i0..n {
            out[i] = line.iter().enumerate().map(|(j, &x)| m[j * n + i] * x).sum();
        }
    }

    pub fn first(&self, line: &[f64], out: &mut [f64]) {
        Self::apply(&self.d1, self.n, line, out)
    }

    pub fn second(&self, line: &[f64], out: &mut [f64]) {
        Self::apply(&self.d2, self.n, line, out)
    }
}

/// Applies a flat-axis stencil to every node of `input` (a full grid field).
pub(crate) fn axis_derivative(grid: &Grid, axis: usize, order: Order, input: &[f64], out: &mut [f64]) {
    let h = grid.spacing().expect("uniform grid");
    let scale = match order {
        Order::First => 1.0 / h,
        Order::Second => 1.0 / (h * h),
    };
    let nt = grid.n_theta();
    let n = grid.n_y();
    let stride = grid.axis_stride(axis) / nt;
    out.par_chunks_mut(nt).enumerate().for_each(|(line, o)| {
        let pos = grid.axis_position(line, axis);
        let (start, w) = stencil(order, pos, n);
        let base = line - pos * stride;
        o.iter_mut().for_each(|x| *x = 0.0);
        for (k, &c) in w.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let src = (base + (start + k) * stride) * nt;
            let c = c * scale;
            for (x, &s) in o.iter_mut().zip(&input[src..src + nt]) {
                *x += c * s;
            }
        }
    });
}

pub(crate) fn angular_derivative(grid: &Grid, diff: &AngularDiff, order: Order, input: &[f64], out: &mut [f64]) {
    let nt = grid.n_theta();
    out.par_chunks_mut(nt).zip(input.par_chunks(nt)).for_each(|(o, l)| match order {
        Order::First => diff.first(l, o),
        Order::Second => diff.second(l, o),
    });
}

/// All derivatives of a graph function needed by the evolution equation.
#[derive(Clone, Debug)]
pub struct Jets {
    /// `[d_1, d_2]` (second entry unused when `k = 1`).
    pub d: [Vec<f64>; 2],
    /// `[d_11, d_22, d_12]`.
    pub dd: [Vec<f64>; 3],
    pub t: Vec<f64>,
    pub tt: Vec<f64>,
    /// `[d_1 d_theta, d_2 d_theta]`.
    pub dt: [Vec<f64>; 2],
}

/// Reusable derivative workspace for one grid.
#[derive(Clone, Debug)]
pub struct DerivativeEngine {
    grid: Grid,
    angular: AngularDiff,
    jets: Jets,
}

impl DerivativeEngine {
    pub fn new(grid: &Grid) -> Result<Self> {
        grid.require_spacing()?;
        let n = grid.len();
        let z = || vec![0.0; n];
        Ok(Self {
            grid: grid.clone(),
            angular: AngularDiff::new(grid.n_theta()),
            jets: Jets { d: [z(), z()], dd: [z(), z(), z()], t: z(), tt: z(), dt: [z(), z()] },
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Fills and returns the derivative jets of `v`.
    pub fn compute(&mut self, v: &[f64]) -> &Jets {
        let g = &self.grid;
        let j = &mut self.jets;
        let k = g.spec().k();
        angular_derivative(g, &self.angular, Order::First, v, &mut j.t);
        angular_derivative(g, &self.angular, Order::Second, v, &mut j.tt);
        for axis in 0..k {
            axis_derivative(g, axis, Order::First, v, &mut j.d[axis]);
            axis_derivative(g, axis, Order::Second, v, &mut j.dd[axis]);
            axis_derivative(g, axis, Order::First, &j.t, &mut j.dt[axis]);
        }
        if k == 2 {
            axis_derivative(g, 1, Order::First, &j.d[0], &mut j.dd[2]);
        }
        &self.jets
    }

    pub fn jets(&self) -> &Jets {
        &self.jets
    }
}

/// Derivative of a field along a flat axis.
pub fn flat_derivative(f: &FlowField, axis: usize, order: Order) -> Result<FlowField> {
    f.grid().require_spacing()?;
    let mut out = vec![0.0; f.grid().len()];
    axis_derivative(f.grid(), axis, order, f.values(), &mut out);
    FlowField::new(f.grid().clone(), out)
}

/// Angular derivative by trigonometric differentiation.
pub fn theta_derivative(f: &FlowField, order: Order) -> FlowField {
    let diff = AngularDiff::new(f.grid().n_theta());
    let mut out = vec![0.0; f.grid().len()];
    angular_derivative(f.grid(), &diff, order, f.values(), &mut out);
    FlowField::new(f.grid().clone(), out).expect("same grid")
}
