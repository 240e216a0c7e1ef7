//! Adaptive Dormand-Prince 5(4) integration for small autonomous and
//! non-autonomous systems, with output times and a stopping predicate.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen from the right-hand side when `None`.
    pub h0: Option<f64>,
    /// Steps shorter than `h_min_rel * max(|t|, 1)` are reported as stiffness.
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, h0: None, h_min_rel: 1e-14, max_steps: 5_000_000 }
    }
}

/// How an integration ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Reached,
    /// The stop predicate fired after an accepted step.
    Stopped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution<const N: usize> {
    /// Requested output times that were reached, with their states.
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    /// Last accepted time and state.
    pub t_end: f64,
    pub y_end: [f64; N],
    pub termination: Termination,
    pub steps: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to the last of `outputs` (increasing,
/// all `>= t0`), landing exactly on every output time. `stop` is checked after
/// every accepted step.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    outputs: &[f64],
    opts: &OdeOptions,
    mut stop: impl FnMut(f64, &[f64; N]) -> bool,
) -> Result<Solution<N>> {
    let t_final = *outputs.last().ok_or_else(|| Error::input("no output times requested"))?;
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs[0] < t0 || !(t_final > t0) {
        return Err(Error::input("output times must be increasing and after the start time"));
    }
    if y0.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("initial state is not finite"));
    }
    let mut sol = Solution {
        t: Vec::with_capacity(outputs.len()),
        y: Vec::with_capacity(outputs.len()),
        t_end: t0,
        y_end: y0,
        termination: Termination::Reached,
        steps: 0,
    };
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] == t0 {
        sol.t.push(t0);
        sol.y.push(y0);
        next_out += 1;
    }
    let mut t = t0;
    let mut y = y0;
    let mut k0 = f(t, &y);
    let mut h = opts.h0.unwrap_or_else(|| initial_step(&y, &k0, opts, t_final - t0));
    let mut fail_streak = 0;
    while next_out < outputs.len() {
        if sol.steps >= opts.max_steps {
            return Err(Error::Solver(format!("step budget of {} exhausted at t = {t}", opts.max_steps)));
        }
        let target = outputs[next_out];
        let hit = t + h >= target;
        let h_try = if hit { target - t } else { h };
        let (y_new, k_last, err) = dopri_step(&mut f, t, &y, &k0, h_try, opts);
        if err <= 1.0 && y_new.iter().all(|x| x.is_finite()) {
            t = if hit { target } else { t + h_try };
            y = y_new;
            k0 = k_last;
            sol.steps += 1;
            fail_streak = 0;
            if hit {
                while next_out < outputs.len() && outputs[next_out] <= t {
                    sol.t.push(t);
                    sol.y.push(y);
                    next_out += 1;
                }
            }
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // a step shortened to hit an output time should not shrink the next one
            h = if hit { h.max(h_try * grow) } else { h_try * grow };
            if stop(t, &y) {
                sol.termination = Termination::Stopped;
                break;
            }
        } else {
            fail_streak += 1;
            let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h = h_try * shrink;
            if h < opts.h_min_rel * t.abs().max(1.0) || fail_streak > 100 {
                return Err(Error::Stiffness { t, h, last: y.to_vec() });
            }
        }
    }
    sol.t_end = t;
    sol.y_end = y;
    Ok(sol)
}

fn scale(y: f64, y_new: f64, opts: &OdeOptions) -> f64 {
    opts.atol + opts.rtol * y.abs().max(y_new.abs())
}

fn initial_step<const N: usize>(y: &[f64; N], k: &[f64; N], opts: &OdeOptions, span: f64) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for i in 0..N {
        let sc = scale(y[i], y[i], opts);
        d0 = d0.max(y[i].abs() / sc);
        d1 = d1.max(k[i].abs() / sc);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    h.min(span).max(1e-12 * span)
}

fn dopri_step<const N: usize>(
    f: &mut impl FnMut(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    k0: &[f64; N],
    h: f64,
    opts: &OdeOptions,
) -> ([f64; N], [f64; N], f64) {
    let mut k = [[0.0; N]; 7];
    k[0] = *k0;
    let mut y_new = *y;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(t + C[s] * h, &ys);
        if s == 6 {
            // the last stage is evaluated at the fifth-order solution (FSAL)
            y_new = ys;
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..N {
        let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
        let sc = scale(y[i], y_new[i], opts);
        let r = if sc > 0.0 { e / sc } else if e == 0.0 { 0.0 } else { f64::INFINITY };
        err = err.max(r.abs());
    }
    (y_new, k[6], err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let outs: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let s = integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], &outs, &OdeOptions::default(), |_, _| false).unwrap();
        assert_eq!(s.t, outs);
        for (t, y) in s.t.iter().zip(&s.y) {
            assert!((y[0] - (-t).exp()).abs() < 1e-8 * (-t).exp());
        }
    }

    #[test]
    fn harmonic_oscillator_conserves_energy() {
        let opts = OdeOptions { rtol: 1e-11, atol: 1e-13, ..Default::default() };
        let s = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], &[20.0 * std::f64::consts::PI], &opts, |_, _| false)
            .unwrap();
        assert!((s.y_end[0] - 1.0).abs() < 1e-8 && s.y_end[1].abs() < 1e-8);
    }

    #[test]
    fn stop_predicate_fires() {
        let s = integrate(|_, _: &[f64; 1]| [1.0], 0.0, [0.0], &[10.0], &OdeOptions::default(), |_, y| y[0] > 3.0).unwrap();
        assert_eq!(s.termination, Termination::Stopped);
        assert!(s.y_end[0] > 3.0 && s.t_end < 10.0);
    }

    #[test]
    fn finite_time_blow_up_is_stiffness() {
        // y' = y^2 from y(0) = 1 blows up at t = 1
        let r = integrate(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], &[2.0], &OdeOptions::default(), |_, _| false);
        match r {
            Err(Error::Stiffness { t, last, .. }) => {
                assert!((t - 1.0).abs() < 1e-3);
                assert!(last[0] > 1e3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_output_times() {
        let f = |_: f64, y: &[f64; 1]| [y[0]];
        assert!(integrate(f, 0.0, [1.0], &[], &OdeOptions::default(), |_, _| false).is_err());
        assert!(integrate(f, 0.0, [1.0], &[2.0, 1.0], &OdeOptions::default(), |_, _| false).is_err());
        assert!(integrate(f, 0.0, [1.0], &[-1.0], &OdeOptions::default(), |_, _| false).is_err());
    }
}
