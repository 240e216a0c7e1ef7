//! Self-similar comparison surfaces: the compact shrinkers `u_a` meeting the
//! axis at `a`, their rotated copies in `R^4` used as inner barriers, and the
//! rotationally symmetric translating bowl.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CylinderGraph, CylinderSpec};
use crate::ode::{integrate, OdeOptions};

/// Below this radius the shrinker is solved as `y(v)` instead of `v(y)`.
pub const CHART_SWITCH: f64 = 0.1;

/// Smallest tip parameter accepted by the shrinker solver.
pub const MIN_TIP: f64 = 4.0;

/// Inner radius of the annulus on which barriers are compared.
pub const BARRIER_INNER_RADIUS: f64 = 4.0;

const TIGHT: OdeOptions = OdeOptions { rtol: 1e-13, atol: 1e-15, h0: None, h_min_rel: 1e-15, max_steps: 20_000_000 };

/// Cubic Hermite interpolation on `[x0, x1]`.
fn hermite(x0: f64, x1: f64, f0: f64, f1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * f0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * f1 + (t3 - t2) * h * d1
}

/// Sixth-order first and second derivatives of uniformly spaced data at `i`
/// (needs three neighbours on each side).
fn central(f: &[f64], i: usize, h: f64) -> (f64, f64) {
    let g = |k: isize| f[(i as isize + k) as usize];
    let d1 = (-g(-3) + 9.0 * g(-2) - 45.0 * g(-1) + 45.0 * g(1) - 9.0 * g(2) + g(3)) / (60.0 * h);
    let d2 = (2.0 * g(-3) - 27.0 * g(-2) + 270.0 * g(-1) - 490.0 * g(0) + 270.0 * g(1) - 27.0 * g(2) + 2.0 * g(3))
        / (180.0 * h * h);
    (d1, d2)
}

/// `v'' = (1 + v'^2)(1/v - (v - y v')/2)`.
fn shrinker_accel(y: f64, v: f64, p: f64) -> f64 {
    (1.0 + p * p) * (1.0 / v - (v - y * p) / 2.0)
}

/// Inverse chart in the depth `z = a - y`:
/// `z'' = (1 + z'^2)(-z'/v + v z'/2 + (a - z)/2)`.
fn tip_accel(a: f64, v: f64, z: f64, q: f64) -> f64 {
    (1.0 + q * q) * (-q / v + v * q / 2.0 + (a - z) / 2.0)
}

/// Sample counts for the two charts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShrinkerResolution {
    /// Uniform samples in `y` on `[0, y(CHART_SWITCH)]`.
    pub body: usize,
    /// Uniform samples in `v` on `[0, CHART_SWITCH]`.
    pub tip: usize,
}

impl Default for ShrinkerResolution {
    fn default() -> Self {
        Self { body: 12_000, tip: 800 }
    }
}

/// Profile `v = u_a(y)` of the shrinker surface of revolution, concave on
/// `[0, a]` with `u_a(a) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkerProfile {
    pub a: f64,
    /// `(y, v, dv/dy)`, uniform in `y`, from `y = 0` to the chart switch.
    pub body: Vec<[f64; 3]>,
    /// `(v, a - y, -dy/dv)`, uniform in `v`, from the tip `v = 0` to the chart switch.
    pub tip: Vec<[f64; 3]>,
}

/// Solves the shrinker with default resolution.
pub fn solve_shrinker(a: f64) -> Result<ShrinkerProfile> {
    ShrinkerProfile::solve(a, ShrinkerResolution::default())
}

/// Independent solves for several tip parameters, in parallel.
pub fn solve_shrinkers(a: &[f64], res: ShrinkerResolution) -> Vec<Result<ShrinkerProfile>> {
    a.par_iter().map(|&a| ShrinkerProfile::solve(a, res)).collect()
}

impl ShrinkerProfile {
    /// Integrates from the tip `(y, v) = (a, 0)`, where the solution is the
    /// series `y = a - a v^2/8 + d v^4`, out to `v = CHART_SWITCH`, then in the
    /// graph chart back to `y = 0`.
    pub fn solve(a: f64, res: ShrinkerResolution) -> Result<Self> {
        if !(a >= MIN_TIP && a.is_finite()) {
            return Err(Error::config(format!("tip parameter must be at least {MIN_TIP}, got {a}")));
        }
        if res.body < 8 || res.tip < 8 {
            return Err(Error::config("shrinker resolution needs at least 8 samples per chart"));
        }
        let b = -a / 8.0;
        let d = -a / 256.0 - a * a * a / 1024.0;
        let series = |v: f64| [-b * v * v - d * v.powi(4), -2.0 * b * v - 4.0 * d * v.powi(3)];
        let v_start = 1e-3 * CHART_SWITCH / res.tip as f64;
        let outs: Vec<f64> = (1..=res.tip).map(|i| CHART_SWITCH * i as f64 / res.tip as f64).collect();
        let sol = integrate(|v, s: &[f64; 2]| [s[1], tip_accel(a, v, s[0], s[1])], v_start, series(v_start), &outs, &TIGHT, |_, _| false)?;
        let mut tip = Vec::with_capacity(res.tip + 1);
        tip.push([0.0, 0.0, 0.0]);
        tip.extend(sol.t.iter().zip(&sol.y).map(|(&v, s)| [v, s[0], s[1]]));
        let [z_switch, dz_switch] = sol.y_end;
        let (y_switch, q_switch) = (a - z_switch, -dz_switch);
        if !(q_switch < 0.0 && y_switch > 0.0) {
            return Err(Error::Solver(format!("tip chart of a = {a} does not reach the switch monotonically")));
        }
        // graph chart in s = -y so that time increases toward y = 0
        let n = res.body;
        let outs: Vec<f64> = (1..=n).map(|i| -y_switch * (1.0 - i as f64 / n as f64)).collect();
        let f = |s: f64, st: &[f64; 2]| [-st[1], -shrinker_accel(-s, st[0], st[1])];
        let sol = integrate(f, -y_switch, [CHART_SWITCH, 1.0 / q_switch], &outs, &TIGHT, |_, st| st[0] <= 0.0)?;
        if sol.t.len() != n {
            return Err(Error::Solver(format!("profile of a = {a} vanishes before reaching the axis")));
        }
        let mut body: Vec<[f64; 3]> = sol.t.iter().zip(&sol.y).map(|(&s, st)| [-s, st[0], st[1]]).rev().collect();
        body.push([y_switch, CHART_SWITCH, 1.0 / q_switch]);
        body[0][0] = 0.0;
        Ok(Self { a, body, tip })
    }

    pub fn switch_point(&self) -> f64 {
        self.body.last().map_or(self.a, |r| r[0])
    }

    /// `u_a(r)` for `0 <= r <= a`.
    pub fn radius(&self, r: f64) -> Option<f64> {
        if !(0.0..=self.a).contains(&r) {
            return None;
        }
        let ys = self.switch_point();
        if r <= ys {
            let h = ys / (self.body.len() - 1) as f64;
            let i = ((r / h) as usize).min(self.body.len() - 2);
            let (p, q) = (self.body[i], self.body[i + 1]);
            return Some(hermite(p[0], q[0], p[1], q[1], p[2], q[2], r));
        }
        // depth increases along the tip samples; find the bracket, then invert the interpolant
        let depth = self.a - r;
        let i = self.tip.partition_point(|s| s[1] < depth).clamp(1, self.tip.len() - 1) - 1;
        let (p, q) = (self.tip[i], self.tip[i + 1]);
        let (mut lo, mut hi) = (p[0], q[0]);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if hermite(p[0], q[0], p[1], q[1], p[2], q[2], mid) < depth {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// All samples as `(y, v)` with `y` increasing, ending at `(a, 0)`.
    pub fn samples(&self) -> Vec<[f64; 2]> {
        let mut out: Vec<[f64; 2]> = self.body.iter().map(|r| [r[0], r[1]]).collect();
        out.extend(self.tip.iter().rev().skip(1).map(|r| [self.a - r[1], r[0]]));
        out
    }

    /// Largest relative residual (equation sum over sum of term magnitudes)
    /// of the graph-chart and the tip-chart equations, with derivatives taken
    /// by finite differences of the samples.
    pub fn residual(&self) -> (f64, f64) {
        let h = self.switch_point() / (self.body.len() - 1) as f64;
        let v: Vec<f64> = self.body.iter().map(|r| r[1]).collect();
        let body = (3..v.len() - 3)
            .map(|i| {
                let (d1, d2) = central(&v, i, h);
                let y = self.body[i][0];
                let terms = [d2 / (1.0 + d1 * d1), -1.0 / v[i], (v[i] - y * d1) / 2.0];
                terms.iter().sum::<f64>().abs() / terms.iter().map(|t| t.abs()).sum::<f64>()
            })
            .fold(0.0, f64::max);
        let k = CHART_SWITCH / (self.tip.len() - 1) as f64;
        let z: Vec<f64> = self.tip.iter().map(|r| r[1]).collect();
        let tip = (3..z.len() - 3)
            .map(|i| {
                let (d1, d2) = central(&z, i, k);
                let (v, w) = (self.tip[i][0], 1.0 + d1 * d1);
                let terms = [-d2, -w * d1 / v, w * v * d1 / 2.0, w * (self.a - z[i]) / 2.0];
                terms.iter().sum::<f64>().abs() / terms.iter().map(|t| t.abs()).sum::<f64>()
            })
            .fold(0.0, f64::max);
        (body, tip)
    }

    /// Largest second divided difference of the samples (nonpositive when concave).
    pub fn concavity_defect(&self) -> f64 {
        self.samples()
            .windows(3)
            .map(|w| {
                let s1 = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
                let s2 = (w[2][1] - w[1][1]) / (w[2][0] - w[1][0]);
                2.0 * (s2 - s1) / (w[2][0] - w[0][0])
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Shoots forward from the computed axis data `(u_a(0), u_a'(0))` and
    /// returns `(y, v)` where the trajectory meets `v = 0`, switching to the
    /// inverse chart at `CHART_SWITCH`. Perturbations grow roughly like
    /// `exp(y^2/4)` along the way, so this round trip only closes for moderate `a`.
    pub fn shoot_from_axis(&self) -> Result<[f64; 2]> {
        let [_, v0, p0] = self.body[0];
        let mut hit = None;
        let sol = integrate(
            |y, st: &[f64; 2]| [st[1], shrinker_accel(y, st[0], st[1])],
            0.0,
            [v0, p0],
            &[2.0 * self.a],
            &TIGHT,
            |y, st| {
                let stop = st[0] <= CHART_SWITCH;
                if stop {
                    hit = Some(y);
                }
                stop
            },
        )?;
        let y1 = hit.ok_or_else(|| Error::Solver("shot from the axis never reaches the chart switch".into()))?;
        let [v1, p1] = sol.y_end;
        // back to v = 0 in the inverse chart, integrating the depth below a in -v
        let a = self.a;
        let f = |t: f64, st: &[f64; 2]| [-st[1], -tip_accel(a, -t, st[0], st[1])];
        let end = integrate(f, -v1, [a - y1, -1.0 / p1], &[-1e-6], &TIGHT, |_, _| false)?;
        let [z_end, dz_end] = end.y_end;
        // last micro-step by the local slope
        Ok([a - (z_end - dz_end * 1e-6), 0.0])
    }
}

/// Outcome of comparing `u_a` with `sqrt 2 - (r^2 - 3)/(sqrt 2 a^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdsUpperCheck {
    /// Largest sampled `r` such that the bound holds on `[0, r]`.
    pub m_emp: f64,
    /// First sampled radius where the bound fails.
    pub crossing: Option<f64>,
}

pub fn ads_upper_bound(a: f64, r: f64) -> f64 {
    SQRT_2 - (r * r - 3.0) / (SQRT_2 * a * a)
}

pub fn check_ads_upper(p: &ShrinkerProfile) -> AdsUpperCheck {
    let mut m_emp = 0.0;
    for [r, v] in p.samples() {
        if v > ads_upper_bound(p.a, r) {
            return AdsUpperCheck { m_emp, crossing: Some(r) };
        }
        m_emp = r;
    }
    AdsUpperCheck { m_emp, crossing: None }
}

/// Rotated shrinker in `R^4`: over the plane radius `r = |(y_1, y_2)|` its
/// circle radius is `u_a(r + eta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatedBarrier {
    pub profile: ShrinkerProfile,
    pub eta: f64,
}

impl RotatedBarrier {
    pub fn new(profile: ShrinkerProfile, eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta < profile.a) {
            return Err(Error::config(format!("barrier shift must lie in [0, a), got {eta}")));
        }
        Ok(Self { profile, eta })
    }

    pub fn a(&self) -> f64 {
        self.profile.a
    }

    /// Largest plane radius covered by the barrier.
    pub fn reach(&self) -> f64 {
        self.profile.a - self.eta
    }

    pub fn radius(&self, r: f64) -> Option<f64> {
        self.profile.radius(r + self.eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierVerdict {
    /// True if the graph stays strictly outside the barrier on the annulus.
    pub enclosed: bool,
    /// `min (v - barrier radius)` over the annulus nodes.
    pub min_clearance: f64,
    /// Plane position of the minimum.
    pub at: [f64; 2],
    pub nodes: usize,
}

/// Compares a bubble-sheet graph with a rotated barrier on the nodes with
/// `inner <= |(y_1, y_2)| <= min(a - eta, R)`.
pub fn barrier_compare(g: &CylinderGraph, b: &RotatedBarrier, inner: f64) -> Result<BarrierVerdict> {
    if g.spec() != CylinderSpec::BUBBLE_SHEET {
        return Err(Error::input("barrier comparison needs a bubble-sheet graph"));
    }
    let grid = g.grid();
    let outer = b.reach().min(grid.half_width());
    if !(inner >= 0.0 && inner < outer) {
        return Err(Error::input(format!("barrier annulus [{inner}, {outer}] does not meet the grid")));
    }
    let nt = grid.n_theta();
    let mut best = BarrierVerdict { enclosed: true, min_clearance: f64::INFINITY, at: [0.0; 2], nodes: 0 };
    for line in 0..grid.n_lines() {
        let y = grid.line_coords(line);
        let r = y[0].hypot(y[1]);
        if r < inner || r > outer {
            continue;
        }
        let u = b.radius(r).ok_or_else(|| Error::input(format!("barrier undefined at radius {r}")))?;
        for &v in &g.values()[line * nt..(line + 1) * nt] {
            best.nodes += 1;
            if v - u < best.min_clearance {
                best.min_clearance = v - u;
                best.at = y;
            }
        }
    }
    if best.nodes == 0 {
        return Err(Error::input("no grid nodes inside the barrier annulus"));
    }
    best.enclosed = best.min_clearance > 0.0;
    Ok(best)
}

/// Height `h(r)` of the rotationally symmetric graph translating with speed
/// `c`: `h''/(1 + h'^2) + h'/r = c`, `h(0) = h'(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowlProfile {
    pub c: f64,
    /// `(r, h, h')`; the first row is the origin, the rest uniform in `log r`.
    pub samples: Vec<[f64; 3]>,
}

/// Bowl with speed `c` on `[0, 1000]`.
pub fn solve_bowl(c: f64) -> Result<BowlProfile> {
    BowlProfile::solve(c, 1e3, 20_000)
}

impl BowlProfile {
    pub fn solve(c: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config(format!("translator speed must be positive, got {c}")));
        }
        if !(r_max > 0.0) || n < 8 {
            return Err(Error::config("bowl needs r_max > 0 and at least 8 samples"));
        }
        // near the origin h = c r^2/4 + c^3 r^4/128
        let r_min = 1e-3 * (1.0 / c).min(r_max);
        let r_start = 1e-3 * r_min;
        let series = |r: f64| [c * r * r / 4.0 + c.powi(3) * r.powi(4) / 128.0, c * r / 2.0 + c.powi(3) * r.powi(3) / 32.0];
        let (s0, s1) = (r_min.ln(), r_max.ln());
        let outs: Vec<f64> = (0..n).map(|i| if i + 1 == n { s1 } else { s0 + (s1 - s0) * i as f64 / (n - 1) as f64 }).collect();
        // in s = log r: h_s = r w, w_s = r (1 + w^2)(c - w/r)
        let f = |s: f64, st: &[f64; 2]| {
            let r = s.exp();
            let w = st[1];
            [r * w, (1.0 + w * w) * (c * r - w)]
        };
        let sol = integrate(f, r_start.ln(), series(r_start), &outs, &TIGHT, |_, _| false)?;
        let mut samples = Vec::with_capacity(n + 1);
        samples.push([0.0, 0.0, 0.0]);
        samples.extend(sol.t.iter().zip(&sol.y).map(|(&s, st)| [s.exp(), st[0], st[1]]));
        samples[n][0] = r_max;
        Ok(Self { c, samples })
    }

    pub fn r_max(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s[0])
    }

    /// `h(r)` by Hermite interpolation in `log r`.
    pub fn height(&self, r: f64) -> Option<f64> {
        if !(0.0..=self.r_max()).contains(&r) {
            return None;
        }
        let first = self.samples[1];
        if r <= first[0] {
            let c = self.c;
            return Some(c * r * r / 4.0 + c.powi(3) * r.powi(4) / 128.0);
        }
        let i = self.samples.partition_point(|s| s[0] <= r).clamp(2, self.samples.len() - 1) - 1;
        let (p, q) = (self.samples[i], self.samples[i + 1]);
        Some(hermite(p[0].ln(), q[0].ln(), p[1], q[1], p[0] * p[2], q[0] * q[2], r.ln()))
    }

    /// Largest relative residual of the translator equation on the interior
    /// samples, with `h''` from finite differences of `h'` in `log r`.
    pub fn residual(&self) -> f64 {
        let pts = &self.samples[1..];
        let ds = (pts[1][0] / pts[0][0]).ln();
        let w: Vec<f64> = pts.iter().map(|p| p[2]).collect();
        let h: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        (3..pts.len() - 3)
            .map(|i| {
                let r = pts[i][0];
                let (ws, _) = central(&w, i, ds);
                let (hs, _) = central(&h, i, ds);
                let wp = ws / r;
                let eq = (wp / (1.0 + w[i] * w[i]) + w[i] / r - self.c).abs() / self.c;
                let slope = (hs / r - w[i]).abs() / w[i].abs().max(1.0);
                eq.max(slope)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest `h'` and smallest `h''` (from the equation) over the samples.
    pub fn monotonicity(&self) -> (f64, f64) {
        let mut min_slope = f64::INFINITY;
        let mut min_curv = f64::INFINITY;
        for &[r, _, w] in &self.samples[1..] {
            min_slope = min_slope.min(w);
            min_curv = min_curv.min((1.0 + w * w) * (self.c - w / r));
        }
        (min_slope, min_curv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn tip_series_matches_equation() {
        // a correct quartic coefficient leaves an O(v^4) residual, a wrong one O(v^2)
        let a = 25.0_f64;
        let (b, d) = (-a / 8.0, -a / 256.0 - a * a * a / 1024.0);
        let res = |v: f64| {
            let z = -b * v * v - d * v.powi(4);
            let q = -2.0 * b * v - 4.0 * d * v.powi(3);
            let zz = -2.0 * b - 12.0 * d * v * v;
            (zz - tip_accel(a, v, z, q)).abs()
        };
        let ratio = res(2e-3) / res(1e-3);
        assert!((ratio - 16.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn shrinker_profile_basics() {
        let p = solve_shrinker(9.0).unwrap();
        // the boundary circle at y = 0 sits just outside the cylinder, below the upper bound
        let u0 = p.radius(0.0).unwrap();
        assert!(u0 > SQRT_2 && u0 < ads_upper_bound(9.0, 0.0), "{u0}");
        assert!(p.radius(9.0).unwrap() < 1e-12);
        assert!(p.radius(9.5).is_none());
        assert!(p.concavity_defect() <= 1e-8);
        let (rb, rt) = p.residual();
        assert!(rb < 1e-8 && rt < 1e-8, "{rb} {rt}");
        let [y, _] = p.shoot_from_axis().unwrap();
        assert!((y - 9.0).abs() < 1e-6, "{y}");
        // radius is continuous across the chart switch
        let ys = p.switch_point();
        let (l, r) = (p.radius(ys - 1e-9).unwrap(), p.radius(ys + 1e-9).unwrap());
        assert!((l - r).abs() < 1e-7 && (l - CHART_SWITCH).abs() < 1e-7);
    }

    #[test]
    fn rejects_small_tip() {
        assert!(matches!(solve_shrinker(3.0), Err(Error::Config(_))));
    }

    #[test]
    fn shrinkers_are_nested() {
        let res = ShrinkerResolution { body: 1000, tip: 200 };
        let ps: Vec<ShrinkerProfile> = solve_shrinkers(&[9.0, 16.0], res).into_iter().map(|p| p.unwrap()).collect();
        // nested away from the boundary circles at y = 0
        for i in 0..=80 {
            let r = BARRIER_INNER_RADIUS + (9.0 - BARRIER_INNER_RADIUS) * i as f64 / 80.0;
            assert!(ps[0].radius(r).unwrap() < ps[1].radius(r).unwrap());
        }
    }

    #[test]
    fn upper_bound_holds_up_to_m_emp() {
        let chk = check_ads_upper(&solve_shrinker(9.0).unwrap());
        let x = chk.crossing.unwrap();
        assert!(chk.m_emp > 0.0 && x > chk.m_emp && x < 9.0);
        let chk = check_ads_upper(&solve_shrinker(25.0).unwrap());
        assert_eq!(chk, AdsUpperCheck { m_emp: 25.0, crossing: None });
    }

    #[test]
    fn cylinder_encloses_barrier() {
        let g = Grid::uniform(CylinderSpec::BUBBLE_SHEET, 8.0, 33, 8).unwrap();
        let b = RotatedBarrier::new(solve_shrinker(10.0).unwrap(), 0.0).unwrap();
        let v = barrier_compare(&CylinderGraph::constant(&g, SQRT_2).unwrap(), &b, BARRIER_INNER_RADIUS).unwrap();
        assert!(v.enclosed && v.min_clearance > 0.0);
        // the barrier itself touches
        let field = crate::grid::FlowField::from_fn(&g, |y, _| b.radius(y[0].hypot(y[1]).min(b.reach())).unwrap().max(0.1));
        let v = barrier_compare(&CylinderGraph::new(field).unwrap(), &b, BARRIER_INNER_RADIUS).unwrap();
        assert!(!v.enclosed && v.min_clearance.abs() < 1e-15);
        // annulus outside the grid
        let far = RotatedBarrier::new(solve_shrinker(10.0).unwrap(), 7.0).unwrap();
        assert!(matches!(barrier_compare(&CylinderGraph::constant(&g, SQRT_2).unwrap(), &far, 4.0), Err(Error::Input(_))));
    }

    #[test]
    fn bowl_is_convex_and_scales() {
        let c = 0.5;
        let p = BowlProfile::solve(c, 50.0, 4000).unwrap();
        let q = BowlProfile::solve(1.0, 25.0, 3000).unwrap();
        assert!(p.residual() < 1e-8, "{}", p.residual());
        let (s, k) = p.monotonicity();
        assert!(s > 0.0 && k > 0.0);
        for r in [0.1, 1.0, 7.0, 33.0, 50.0] {
            let lhs = p.height(r).unwrap();
            let rhs = q.height(c * r).unwrap() / c;
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.max(1.0), "{r} {lhs} {rhs}");
        }
    }
}
