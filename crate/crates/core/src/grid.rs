//! Tensor grids over `R^k x S^1` and the sampled fields that live on them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A generalized cylinder `R^k x S^m`. Only the bubble-sheet `(2, 1)` and the
/// neck `(1, 1)` instances are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderSpec {
    k: usize,
    m: usize,
}

impl CylinderSpec {
    /// `R^2 x S^1(sqrt 2)`.
    pub const BUBBLE_SHEET: CylinderSpec = CylinderSpec { k: 2, m: 1 };
    /// `R x S^1(sqrt 2)`, used for the shrinker profile reduction.
    pub const NECK: CylinderSpec = CylinderSpec { k: 1, m: 1 };

    pub fn new(k: usize, m: usize) -> Result<Self> {
        match (k, m) {
            (2, 1) => Ok(Self::BUBBLE_SHEET),
            (1, 1) => Ok(Self::NECK),
            _ => Err(Error::config(format!(
                "unsupported cylinder R^{k} x S^{m}; only (k, m) = (2, 1) or (1, 1)"
            ))),
        }
    }

    /// Number of flat directions.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Sphere dimension `n - k`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Radius of the self-similarly shrinking cylinder at `tau`-time stationarity, `sqrt(2m)`.
    pub fn base_radius(&self) -> f64 {
        (2.0 * self.m as f64).sqrt()
    }

    pub(crate) fn require_bubble_sheet(&self, what: &str) -> Result<()> {
        if *self == Self::BUBBLE_SHEET {
            Ok(())
        } else {
            Err(Error::config(format!("{what} is only defined on the bubble-sheet R^2 x S^1")))
        }
    }
}

/// Nodes of a tensor grid: the same coordinate vector on every flat axis and a
/// uniform periodic angle.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    spec: CylinderSpec,
    ys: Vec<f64>,
    n_theta: usize,
    spacing: Option<f64>,
}

impl Grid {
    /// Uniform grid on `[-R, R]^k` with `n_y` nodes per flat axis (endpoints included).
    pub fn uniform(spec: CylinderSpec, half_width: f64, n_y: usize, n_theta: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::config(format!("half width must be positive, got {half_width}")));
        }
        if n_y < 6 {
            return Err(Error::config(format!("need at least 6 nodes per flat axis, got {n_y}")));
        }
        Self::check_theta(n_theta)?;
        let h = 2.0 * half_width / (n_y - 1) as f64;
        let ys = (0..n_y).map(|i| -half_width + i as f64 * h).collect();
        Ok(Self { spec, ys, n_theta, spacing: Some(h) })
    }

    /// Grid with arbitrary (strictly increasing) flat nodes, e.g. quadrature nodes.
    /// Finite differences are not available on such grids.
    pub fn with_nodes(spec: CylinderSpec, ys: Vec<f64>, n_theta: usize) -> Result<Self> {
        if ys.is_empty() || ys.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("flat nodes must be strictly increasing"));
        }
        Self::check_theta(n_theta)?;
        Ok(Self { spec, ys, n_theta, spacing: None })
    }

    fn check_theta(n_theta: usize) -> Result<()> {
        if n_theta < 4 || n_theta % 2 != 0 {
            return Err(Error::config(format!("angular resolution must be even and >= 4, got {n_theta}")));
        }
        Ok(())
    }

    pub fn spec(&self) -> CylinderSpec {
        self.spec
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn n_y(&self) -> usize {
        self.ys.len()
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    /// Flat spacing, `None` for non-uniform grids.
    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    pub(crate) fn require_spacing(&self) -> Result<f64> {
        self.spacing
            .ok_or_else(|| Error::config("finite differences need a uniform flat grid"))
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn theta(&self, t: usize) -> f64 {
        t as f64 * self.dtheta()
    }

    /// Largest flat coordinate.
    pub fn half_width(&self) -> f64 {
        self.ys[self.ys.len() - 1]
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n_y().pow(self.spec.k() as u32) * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of angular lines (one per flat node).
    pub fn n_lines(&self) -> usize {
        self.n_y().pow(self.spec.k() as u32)
    }

    /// Flat multi-index `(i, j)` of a line (`j = 0` when `k = 1`).
    pub fn line_index(&self, line: usize) -> (usize, usize) {
        match self.spec.k() {
            1 => (line, 0),
            _ => (line / self.n_y(), line % self.n_y()),
        }
    }

    /// Flat coordinates of a line, padded with zero for `k = 1`.
    pub fn line_coords(&self, line: usize) -> [f64; 2] {
        let (i, j) = self.line_index(line);
        match self.spec.k() {
            1 => [self.ys[i], 0.0],
            _ => [self.ys[i], self.ys[j]],
        }
    }

    /// Node coordinates `(y, theta)` for a flat node index.
    pub fn node(&self, idx: usize) -> ([f64; 2], f64) {
        let line = idx / self.n_theta;
        (self.line_coords(line), self.theta(idx % self.n_theta))
    }

    /// Line stride (in nodes) of flat axis `axis`.
    pub(crate) fn axis_stride(&self, axis: usize) -> usize {
        match (self.spec.k(), axis) {
            (2, 0) => self.n_y() * self.n_theta,
            _ => self.n_theta,
        }
    }

    /// Position of a line along `axis`.
    pub(crate) fn axis_position(&self, line: usize, axis: usize) -> usize {
        let (i, j) = self.line_index(line);
        if axis == 0 {
            i
        } else {
            j
        }
    }

    /// True for lines within `layers` nodes of the edge of the flat box.
    pub fn is_edge_line(&self, line: usize, layers: usize) -> bool {
        let n = self.n_y();
        let near = |i: usize| i < layers || i + layers >= n;
        let (i, j) = self.line_index(line);
        match self.spec.k() {
            1 => near(i),
            _ => near(i) || near(j),
        }
    }
}

/// Scalar samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    grid: Grid,
    values: Vec<f64>,
}

impl FlowField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "field has {} samples but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { values: vec![0.0; grid.len()], grid: grid.clone() }
    }

    /// Samples `f(y, theta)` at every node; `y[1]` is zero on `k = 1` grids.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let (y, th) = grid.node(idx);
                f(y, th)
            })
            .collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_with(&self, other: &FlowField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.require_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Largest absolute value over nodes whose flat position satisfies `keep`.
    pub fn max_abs_where(&self, keep: impl Fn([f64; 2]) -> bool) -> f64 {
        let nt = self.grid.n_theta();
        let mut m: f64 = 0.0;
        for line in 0..self.grid.n_lines() {
            if keep(self.grid.line_coords(line)) {
                for &x in &self.values[line * nt..(line + 1) * nt] {
                    m = m.max(x.abs());
                }
            }
        }
        m
    }

    pub(crate) fn require_same_grid(&self, other: &FlowField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::config("fields live on different grids"));
        }
        Ok(())
    }
}

/// A positive graph radius `v` over the cylinder.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderGraph {
    field: FlowField,
}

impl CylinderGraph {
    pub fn new(field: FlowField) -> Result<Self> {
        if let Some((node, &value)) =
            field.values().iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::Domain { node, value });
        }
        Ok(Self { field })
    }

    /// Constant radius `c`.
    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        Self::new(FlowField::from_fn(grid, |_, _| c))
    }

    /// `v = sqrt(2m) + u`.
    pub fn from_deviation(u: &FlowField) -> Result<Self> {
        let r = u.grid().spec().base_radius();
        Self::new(u.map(|x| r + x))
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn spec(&self) -> CylinderSpec {
        self.field.grid().spec()
    }

    pub fn field(&self) -> &FlowField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// `u = v - sqrt(2m)`.
    pub fn deviation(&self) -> FlowField {
        let r = self.spec().base_radius();
        self.field.map(|v| v - r)
    }

    pub fn into_field(self) -> FlowField {
        self.field
    }
}
