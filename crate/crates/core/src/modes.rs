//! Reduced dynamics of the neutral coefficients: the quadratic ODE for
//! `(alpha_1, alpha_2, alpha_3)`, its trace/determinant form, the autonomous
//! phase plane in `(x, y)` and the quantized limit matrix `Q`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions, Termination};

const SQRT_8: f64 = 2.828_427_124_746_190_3;

/// `-1/sqrt 8`, the nonzero quantized eigenvalue.
pub const NEGATIVE_EIGENVALUE: f64 = -0.353_553_390_593_273_8;

pub const SNAP_TOLERANCE: f64 = 0.02;
pub const SETTLE_WINDOW_FRACTION: f64 = 0.25;
pub const SETTLE_TOLERANCE: f64 = 0.05;

/// `d/dtau (alpha_1, alpha_2, alpha_3)`.
pub fn spectral_rhs([a1, a2, a3]: [f64; 3]) -> [f64; 3] {
    [-SQRT_8 * (a1 * a1 + a3 * a3), -SQRT_8 * (a2 * a2 + a3 * a3), -SQRT_8 * (a1 + a2) * a3]
}

/// Trace and determinant of `A = [[alpha_1, alpha_3], [alpha_3, alpha_2]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDet {
    pub s: f64,
    pub d: f64,
}

impl TraceDet {
    pub fn from_alpha([a1, a2, a3]: [f64; 3]) -> Self {
        Self { s: a1 + a2, d: a1 * a2 - a3 * a3 }
    }

    /// `(S', D') = (-sqrt 8 (S^2 - 2D), -sqrt 8 S D)`.
    pub fn rates(&self) -> (f64, f64) {
        (-SQRT_8 * (self.s * self.s - 2.0 * self.d), -SQRT_8 * self.s * self.d)
    }

    /// `S^2/4 - D`, nonnegative for real symmetric matrices.
    pub fn discriminant(&self) -> f64 {
        self.s * self.s / 4.0 - self.d
    }
}

/// Scale-free coordinates `x = sqrt 2 tau S`, `y = 8 tau^2 D`, `sigma = -log(-tau)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl PhasePoint {
    pub fn new(tau: f64, td: TraceDet) -> Result<Self> {
        if !(tau < 0.0) {
            return Err(Error::input(format!("phase coordinates need tau < 0, got {tau}")));
        }
        Ok(Self { x: std::f64::consts::SQRT_2 * tau * td.s, y: 8.0 * tau * tau * td.d, sigma: -(-tau).ln() })
    }
}

/// `V(x, y) = (2x^2 - x - y, 2xy - 2y)`, the `sigma`-velocity of `(x, y)`.
pub fn phase_vector_field(x: f64, y: f64) -> [f64; 2] {
    [2.0 * x * x - x - y, 2.0 * x * y - 2.0 * y]
}

pub fn phase_jacobian(x: f64, y: f64) -> [[f64; 2]; 2] {
    [[4.0 * x - 1.0, -1.0], [2.0 * y, 2.0 * x - 2.0]]
}

/// Eigenvalues of a 2x2 matrix as `(re, im)` pairs, real ones sorted ascending.
pub fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = tr / 2.0 + r.copysign(tr);
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (a, b) = if big < small { (big, small) } else { (small, big) };
        [(a, 0.0), (b, 0.0)]
    } else {
        let i = (-disc).sqrt();
        [(tr / 2.0, -i), (tr / 2.0, i)]
    }
}

/// Axis-parallel rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl PhaseBox {
    /// `[1/4, 3/2] x [-1/4, 3/2]`.
    pub const A_PRIORI: PhaseBox = PhaseBox { x: [0.25, 1.5], y: [-0.25, 1.5] };

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.x[0]..=self.x[1]).contains(&p[0]) && (self.y[0]..=self.y[1]).contains(&p[1])
    }
}

/// Zeros of `V` inside `bx`, found by Newton iteration from a seed lattice.
pub fn fixed_points(bx: &PhaseBox) -> Vec<[f64; 2]> {
    let mut found: Vec<[f64; 2]> = Vec::new();
    let n = 16;
    for i in 0..=n {
        for j in 0..=n {
            let mut p = [
                bx.x[0] + (bx.x[1] - bx.x[0]) * i as f64 / n as f64,
                bx.y[0] + (bx.y[1] - bx.y[0]) * j as f64 / n as f64,
            ];
            for _ in 0..60 {
                let v = phase_vector_field(p[0], p[1]);
                let m = phase_jacobian(p[0], p[1]);
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < 1e-14 {
                    break;
                }
                let dx = (m[1][1] * v[0] - m[0][1] * v[1]) / det;
                let dy = (m[0][0] * v[1] - m[1][0] * v[0]) / det;
                p = [p[0] - dx, p[1] - dy];
                if dx.abs() + dy.abs() < 1e-15 {
                    break;
                }
            }
            let v = phase_vector_field(p[0], p[1]);
            if v[0].abs() + v[1].abs() < 1e-13 && bx.contains(p) {
                // snap to rationals with small denominators when within rounding
                let snap = |x: f64| {
                    let r = (2.0 * x).round() / 2.0;
                    if (x - r).abs() < 1e-12 {
                        r
                    } else {
                        x
                    }
                };
                let q = [snap(p[0]), snap(p[1])];
                if !found.iter().any(|f| (f[0] - q[0]).abs() + (f[1] - q[1]).abs() < 1e-8) {
                    found.push(q);
                }
            }
        }
    }
    found.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    found
}

/// Smooth bounded perturbation of size `delta / tau^2` added to each rate,
/// with frequencies and phases drawn from a seeded generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub delta: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeOptions {
    /// Samples equally spaced in `sigma = -log(-tau)`.
    pub n_samples: usize,
    pub rtol: f64,
    pub noise: Option<NoiseSpec>,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self { n_samples: 400, rtol: 1e-9, noise: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSample {
    pub tau: f64,
    pub alpha: [f64; 3],
    pub trace: TraceDet,
    pub phase: PhasePoint,
}

impl AlphaSample {
    pub fn new(tau: f64, alpha: [f64; 3]) -> Result<Self> {
        let trace = TraceDet::from_alpha(alpha);
        Ok(Self { tau, alpha, trace, phase: PhasePoint::new(tau, trace)? })
    }

    /// `|tau| A`.
    pub fn scaled_matrix(&self) -> [[f64; 2]; 2] {
        let s = self.tau.abs();
        let [a1, a2, a3] = self.alpha;
        [[s * a1, s * a3], [s * a3, s * a2]]
    }
}

/// `A = a R(phi)^T diag(0, 1) R(phi)`, i.e. `a (sin phi, cos phi)^T (sin phi, cos phi)`.
pub fn rotated_rank_one(a: f64, phi: f64) -> [f64; 3] {
    let (s, c) = phi.sin_cos();
    [a * s * s, a * c * c, a * s * c]
}

/// Integrates the neutral-mode ODE from `(tau0, alpha0)` to `tau1`.
pub fn integrate_modes(alpha0: [f64; 3], tau0: f64, tau1: f64, opts: &ModeOptions) -> Result<Vec<AlphaSample>> {
    if !(tau0 < tau1 && tau1 < 0.0) {
        return Err(Error::input(format!("need tau0 < tau1 < 0, got {tau0} and {tau1}")));
    }
    if opts.n_samples < 2 {
        return Err(Error::input("need at least two samples"));
    }
    let (s0, s1) = (-(-tau0).ln(), -(-tau1).ln());
    let n = opts.n_samples - 1;
    let outputs: Vec<f64> = (0..=n)
        .map(|i| if i == n { tau1 } else { -(-(s0 + (s1 - s0) * i as f64 / n as f64)).exp() })
        .map(|t: f64| t.max(tau0))
        .collect();
    let noise = opts.noise.map(|spec| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let freq: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..2.0));
        let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
        (spec.delta, freq, phase)
    });
    let rhs = |tau: f64, a: &[f64; 3]| {
        let mut r = spectral_rhs(*a);
        if let Some((delta, freq, phase)) = noise {
            let sigma = -(-tau).ln();
            for i in 0..3 {
                r[i] += delta / (tau * tau) * (freq[i] * sigma + phase[i]).sin();
            }
        }
        r
    };
    let scale = alpha0.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(opts.noise.map_or(0.0, |n| n.delta / (tau0 * tau0)));
    let ode = OdeOptions { rtol: opts.rtol, atol: 1e-9 * opts.rtol * scale, ..Default::default() };
    let sol = integrate(rhs, tau0, alpha0, &outputs, &ode, |_, _| false)?;
    sol.t.iter().zip(&sol.y).map(|(&t, &a)| AlphaSample::new(t, a)).collect()
}

/// Limit matrix `Q = lim |tau| A` estimated from the end of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizationMatrix {
    pub q: [[f64; 2]; 2],
    /// Eigenvalues of `q`, ascending.
    pub raw_eigenvalues: [f64; 2],
    /// Distance of each raw eigenvalue to the nearer of `0` and `-1/sqrt 8`.
    pub snap_distance: [f64; 2],
    /// Snapped eigenvalues; `None` when unsettled or outside the snap tolerance.
    pub snapped: Option<[f64; 2]>,
    pub rank: Option<usize>,
    /// Rotation angle for rank one: `Q = R(phi)^T diag(0, -1/sqrt 8) R(phi)`, in `(-pi/2, pi/2]`.
    pub angle: Option<f64>,
    /// `max |dphi/dtau| |tau|` over the window (rank one only).
    pub angle_rate_bound: Option<f64>,
    pub settled: bool,
    pub window: usize,
}

fn sym_eigenvalues(m: [[f64; 2]; 2]) -> [f64; 2] {
    let e = eigenvalues_2x2(m);
    [e[0].0, e[1].0]
}

/// Angle of the eigenvector of the more negative eigenvalue, `(sin phi, cos phi)`.
pub fn rank_one_angle(q: [[f64; 2]; 2]) -> f64 {
    let mut phi = 0.5 * (-2.0 * q[0][1]).atan2(q[0][0] - q[1][1]);
    if phi <= -FRAC_PI_2 {
        phi += PI;
    }
    phi
}

/// Snaps the `|tau|`-scaled eigenvalues over the trailing quarter of the
/// trajectory. The window counts as settled when each eigenvalue varies by
/// less than 5% of `max(|mean|, 1/sqrt 8)`.
pub fn classify_q(traj: &[AlphaSample]) -> Result<QuantizationMatrix> {
    if traj.len() < 4 {
        return Err(Error::input(format!("need at least 4 samples, got {}", traj.len())));
    }
    let window = ((traj.len() as f64 * SETTLE_WINDOW_FRACTION).ceil() as usize).max(2);
    let tail = &traj[traj.len() - window..];
    let eigs: Vec<[f64; 2]> = tail.iter().map(|s| sym_eigenvalues(s.scaled_matrix())).collect();
    let settled = (0..2).all(|b| {
        let vals: Vec<f64> = eigs.iter().map(|e| e[b]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        hi - lo < SETTLE_TOLERANCE * mean.abs().max(-NEGATIVE_EIGENVALUE)
    });
    let last = traj.last().unwrap();
    let q = last.scaled_matrix();
    let raw = sym_eigenvalues(q);
    let snap_one = |e: f64| if (e - NEGATIVE_EIGENVALUE).abs() < e.abs() { NEGATIVE_EIGENVALUE } else { 0.0 };
    let snap_distance = raw.map(|e| (e - snap_one(e)).abs());
    let snapped = (settled && snap_distance.iter().all(|d| *d <= SNAP_TOLERANCE)).then(|| raw.map(snap_one));
    let rank = snapped.map(|s| s.iter().filter(|e| **e != 0.0).count());
    let (angle, angle_rate_bound) = if rank == Some(1) {
        let phis: Vec<(f64, f64)> = tail.iter().map(|s| (s.tau, rank_one_angle(s.scaled_matrix()))).collect();
        let bound = phis
            .windows(2)
            .map(|w| {
                let mut dphi = w[1].1 - w[0].1;
                // angles live modulo pi
                dphi -= PI * (dphi / PI).round();
                (dphi / (w[1].0 - w[0].0)).abs() * w[1].0.abs()
            })
            .fold(0.0, f64::max);
        (Some(rank_one_angle(q)), Some(bound))
    } else {
        (None, None)
    };
    Ok(QuantizationMatrix { q, raw_eigenvalues: raw, snap_distance, snapped, rank, angle, angle_rate_bound, settled, window })
}

/// How a phase-plane trajectory ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseOutcome {
    ReachedTarget,
    ExitedBox,
    /// `|V|` became negligible near a zero of `V`.
    Converged { x: f64, y: f64 },
    /// The `sigma` budget ran out.
    Running,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub sigma: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub outcome: PhaseOutcome,
    /// Smallest distance to the target seen at accepted steps.
    pub closest_approach: Option<f64>,
}

/// Forward-`sigma` integration of `V` from `start` for at most `sigma_max`,
/// recording `n_samples` equally spaced points. Stops on entering the target
/// ball, leaving `bx`, or settling at a zero of `V`.
pub fn trace_phase(
    start: [f64; 2],
    sigma_max: f64,
    n_samples: usize,
    target: Option<([f64; 2], f64)>,
    bx: Option<PhaseBox>,
) -> Result<PhaseTrace> {
    let outputs: Vec<f64> = (1..=n_samples.max(1)).map(|i| sigma_max * i as f64 / n_samples.max(1) as f64).collect();
    let mut closest = f64::INFINITY;
    let mut outcome = PhaseOutcome::Running;
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
    let sol = integrate(
        |_, p: &[f64; 2]| phase_vector_field(p[0], p[1]),
        0.0,
        start,
        &outputs,
        &opts,
        |_, p| {
            if let Some((c, r)) = target {
                let d = (p[0] - c[0]).hypot(p[1] - c[1]);
                closest = closest.min(d);
                if d <= r {
                    outcome = PhaseOutcome::ReachedTarget;
                    return true;
                }
            }
            if let Some(b) = bx {
                if !b.contains(*p) {
                    outcome = PhaseOutcome::ExitedBox;
                    return true;
                }
            }
            let v = phase_vector_field(p[0], p[1]);
            if v[0].hypot(v[1]) < 1e-12 {
                outcome = PhaseOutcome::Converged { x: p[0], y: p[1] };
                return true;
            }
            false
        },
    )?;
    let mut sigma = vec![0.0];
    let mut points = vec![start];
    sigma.extend(&sol.t);
    points.extend(&sol.y);
    if sol.termination == Termination::Stopped {
        sigma.push(sol.t_end);
        points.push(sol.y_end);
    }
    Ok(PhaseTrace { sigma, points, outcome, closest_approach: target.map(|_| closest) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixReport {
    pub saddle: [f64; 2],
    pub source: [f64; 2],
    pub saddle_eigenvalues: [f64; 2],
    pub source_eigenvalues: [f64; 2],
    /// Trajectory leaving the source towards the saddle.
    pub connector: PhaseTrace,
    pub connector_reached: bool,
    pub reverse_attempts: usize,
    pub reverse_successes: usize,
    pub reverse_exited_box: usize,
    pub reverse_converged: usize,
    /// Smallest distance to the source over all reverse attempts.
    pub reverse_closest: f64,
}

pub const CONNECTOR_TOLERANCE: f64 = 1e-3;

/// Checks the one-way connection between the zeros `(1, 1)` and `(1/2, 0)`:
/// the unstable direction of `(1, 1)` towards the saddle reaches its
/// `1e-3`-ball, while forward trajectories from `attempts` perturbations of the
/// saddle (radius `1e-2`) never come within `1e-3` of `(1, 1)`.
pub fn separatrix_check(attempts: usize) -> Result<SeparatrixReport> {
    let saddle = [0.5, 0.0];
    let source = [1.0, 1.0];
    let real = |m| sym_or_real(eigenvalues_2x2(m));
    let saddle_eigenvalues = real(phase_jacobian(saddle[0], saddle[1]))?;
    let source_eigenvalues = real(phase_jacobian(source[0], source[1]))?;
    // the eigenvalue-1 direction (1, 2) of the source spans the invariant line
    // y = 2x - 1 through the saddle, so a finite offset along it is exact
    let eps = 1e-3;
    let n = 5f64.sqrt();
    let start = [source[0] - eps / n, source[1] - 2.0 * eps / n];
    let connector = trace_phase(start, 60.0, 600, Some((saddle, CONNECTOR_TOLERANCE)), None)?;
    let connector_reached = connector.outcome == PhaseOutcome::ReachedTarget;
    let mut report = SeparatrixReport {
        saddle,
        source,
        saddle_eigenvalues,
        source_eigenvalues,
        connector,
        connector_reached,
        reverse_attempts: attempts,
        reverse_successes: 0,
        reverse_exited_box: 0,
        reverse_converged: 0,
        reverse_closest: f64::INFINITY,
    };
    for i in 0..attempts {
        let a = 2.0 * PI * (i as f64 + 0.5) / attempts as f64;
        let p = [saddle[0] + 1e-2 * a.cos(), saddle[1] + 1e-2 * a.sin()];
        let t = trace_phase(p, 60.0, 60, Some((source, CONNECTOR_TOLERANCE)), Some(PhaseBox::A_PRIORI))?;
        report.reverse_closest = report.reverse_closest.min(t.closest_approach.unwrap_or(f64::INFINITY));
        match t.outcome {
            PhaseOutcome::ReachedTarget => report.reverse_successes += 1,
            PhaseOutcome::ExitedBox => report.reverse_exited_box += 1,
            PhaseOutcome::Converged { .. } => report.reverse_converged += 1,
            PhaseOutcome::Running => {}
        }
    }
    Ok(report)
}

fn sym_or_real(e: [(f64, f64); 2]) -> Result<[f64; 2]> {
    if e[0].1 != 0.0 {
        return Err(Error::Solver("complex eigenvalues at a phase-plane zero".into()));
    }
    Ok([e[0].0, e[1].0])
}
