//! Adaptive Dormand–Prince 5(4) integrator for autonomous systems.
//!
//! The state type is generic over [`Scalar`], so a whole integration can be
//! run on dual numbers to differentiate the end point with respect to the
//! initial condition. Error control only looks at real parts; the step
//! sequence for a dual run is therefore identical to the plain run.

use crate::error::{Error, Result};
use crate::expr::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    /// Mixed absolute/relative local error tolerance.
    pub tol: f64,
    /// The state escapes when any coordinate exceeds this in magnitude.
    pub escape_radius: f64,
    pub max_steps: usize,
    /// Upper bound on the step size (0 for none).
    pub max_step: f64,
}

impl IntegratorOptions {
    pub fn with_tol(tol: f64) -> IntegratorOptions {
        IntegratorOptions {
            tol,
            ..IntegratorOptions::default()
        }
    }
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            tol: 1e-10,
            escape_radius: 1e6,
            max_steps: 200_000,
            max_step: 0.0,
        }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// differences between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Work buffers for one system dimension.
struct Stages<S> {
    k: [Vec<S>; 7],
    tmp: Vec<S>,
    y_new: Vec<S>,
}

impl<S: Scalar> Stages<S> {
    fn new(dim: usize) -> Self {
        let z = S::cst(0.0);
        Stages {
            k: std::array::from_fn(|_| vec![z; dim]),
            tmp: vec![z; dim],
            y_new: vec![z; dim],
        }
    }
}

/// Takes one step of size `h` from `y` (with `k[0] = f(y)` already
/// computed). Leaves the new state in `st.y_new`, `f(y_new)` in `st.k[6]`,
/// and returns the scaled error norm.
fn dopri_step<S, F>(f: &mut F, y: &[S], h: f64, st: &mut Stages<S>, tol: f64) -> f64
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]),
{
    let n = y.len();
    let Stages { k, tmp, y_new } = st;
    let stage = |tmp: &mut Vec<S>, k: &[Vec<S>; 7], coeffs: &[(usize, f64)]| {
        for i in 0..n {
            let mut acc = y[i];
            for &(j, a) in coeffs {
                acc += k[j][i].scale(h * a);
            }
            tmp[i] = acc;
        }
    };
    stage(tmp, k, &[(0, A21)]);
    f(tmp, &mut k[1]);
    stage(tmp, k, &[(0, A31), (1, A32)]);
    f(tmp, &mut k[2]);
    stage(tmp, k, &[(0, A41), (1, A42), (2, A43)]);
    f(tmp, &mut k[3]);
    stage(tmp, k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
    f(tmp, &mut k[4]);
    stage(tmp, k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
    f(tmp, &mut k[5]);
    for i in 0..n {
        y_new[i] = y[i]
            + k[0][i].scale(h * B1)
            + k[2][i].scale(h * B3)
            + k[3][i].scale(h * B4)
            + k[4][i].scale(h * B5)
            + k[5][i].scale(h * B6);
    }
    f(y_new, &mut k[6]);
    let mut err = 0.0f64;
    for i in 0..n {
        let e = h
            * (E1 * k[0][i].re()
                + E3 * k[2][i].re()
                + E4 * k[3][i].re()
                + E5 * k[4][i].re()
                + E6 * k[5][i].re()
                + E7 * k[6][i].re());
        let sc = tol + tol * y[i].re().abs().max(y_new[i].re().abs());
        err = err.max((e / sc).abs());
    }
    err
}

/// What the observer wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Integrates `ẏ = f(y)` from time 0 to `t_end` (which may be negative).
pub fn integrate<S, F>(f: F, y0: &[S], t_end: f64, opts: &IntegratorOptions) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]),
{
    integrate_observed(f, y0, t_end, opts, |_, _, _, _| Control::Continue).map(|(y, _)| y)
}

/// Like [`integrate`], calling `observe(t_prev, y_prev, t, y)` after every
/// accepted step. Returns the final state and time (earlier than `t_end`
/// if the observer stopped the run).
pub fn integrate_observed<S, F, O>(
    mut f: F,
    y0: &[S],
    t_end: f64,
    opts: &IntegratorOptions,
    mut observe: O,
) -> Result<(Vec<S>, f64)>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]),
    O: FnMut(f64, &[S], f64, &[S]) -> Control,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t_end == 0.0 || n == 0 {
        return Ok((y, 0.0));
    }
    let dir = t_end.signum();
    let span = t_end.abs();
    let tol = opts.tol;
    let mut st = Stages::new(n);
    f(&y, &mut st.k[0]);

    // initial step (Hairer–Wanner heuristic, real parts)
    let sc = |v: f64| tol + tol * v.abs();
    let d0 = rms(y.iter().map(|v| v.re() / sc(v.re())));
    let d1 = rms(st.k[0].iter().zip(&y).map(|(k, v)| k.re() / sc(v.re())));
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(span);
    if opts.max_step > 0.0 {
        h = h.min(opts.max_step);
    }
    if d1 == 0.0 {
        // stationary point: the flow is the identity
        h = span;
    }

    let mut t = 0.0f64;
    let mut steps = 0usize;
    let mut prev = y.clone();
    while t < span {
        if steps >= opts.max_steps {
            return Err(Error::Stiffness { time: dir * t });
        }
        steps += 1;
        let last = t + h >= span * (1.0 - 1e-15);
        let h_try = if last { span - t } else { h };
        let err = dopri_step(&mut f, &y, dir * h_try, &mut st, tol);
        if !err.is_finite() {
            h *= 0.1;
            if h < 1e-14 * span.max(1.0) {
                return Err(Error::Escape { time: dir * t });
            }
            continue;
        }
        if err <= 1.0 {
            prev.copy_from_slice(&y);
            std::mem::swap(&mut y, &mut st.y_new);
            let (k0, k6) = {
                let (a, b) = st.k.split_at_mut(6);
                (&mut a[0], &mut b[0])
            };
            std::mem::swap(k0, k6);
            let t_prev = t;
            t = if last { span } else { t + h_try };
            if y.iter().any(|v| !v.re().is_finite() || v.re().abs() > opts.escape_radius) {
                return Err(Error::Escape { time: dir * t });
            }
            if observe(dir * t_prev, &prev, dir * t, &y) == Control::Stop {
                return Ok((y, dir * t));
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = h_try * factor;
        if opts.max_step > 0.0 {
            h = h.min(opts.max_step);
        }
        if h < 1e-13 * span.max(1.0) && t < span {
            return Err(Error::Stiffness { time: dir * t });
        }
    }
    Ok((y, t_end))
}

/// A single fixed step of size `h` (no error control); used to land exactly
/// on event times.
pub fn single_step<S, F>(mut f: F, y: &[S], h: f64) -> Vec<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]),
{
    let mut st = Stages::new(y.len());
    f(y, &mut st.k[0]);
    dopri_step(&mut f, y, h, &mut st, 1.0);
    st.y_new
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if c == 0 {
        0.0
    } else {
        (s / c as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Dual;

    fn rotation(y: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * y[1];
        out[1] = -2.0 * y[0];
    }

    #[test]
    fn quarter_turn_of_elliptic_flow() {
        let y = integrate(rotation, &[1.0, 0.0], std::f64::consts::FRAC_PI_2, &IntegratorOptions::with_tol(1e-12)).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-10 && y[1].abs() < 1e-10, "{y:?}");
    }

    #[test]
    fn backward_then_forward_returns() {
        let o = IntegratorOptions::with_tol(1e-11);
        let f = |y: &[f64], out: &mut [f64]| {
            out[0] = y[1] + y[0] * y[0] * 0.1;
            out[1] = -y[0].sin();
        };
        let a = integrate(f, &[0.3, 0.2], 3.0, &o).unwrap();
        let b = integrate(f, &a, -3.0, &o).unwrap();
        assert!((b[0] - 0.3).abs() < 1e-9 && (b[1] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn escape_is_reported() {
        let f = |y: &[f64], out: &mut [f64]| out[0] = y[0] * y[0];
        match integrate(f, &[1.0], 2.0, &IntegratorOptions::default()) {
            Err(Error::Escape { time }) | Err(Error::Stiffness { time }) => assert!(time < 1.0 + 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dual_run_gives_variational_derivative() {
        // ẋ = x, so d x(1) / d x(0) = e
        let f = |y: &[Dual], out: &mut [Dual]| out[0] = y[0];
        let y = integrate(f, &[Dual::variable(0.5)], 1.0, &IntegratorOptions::with_tol(1e-12)).unwrap();
        assert!((y[0].du - std::f64::consts::E).abs() < 1e-9);
        assert!((y[0].re - 0.5 * std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn zero_time_is_identity() {
        let y = integrate(rotation, &[0.4, -0.1], 0.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(y, vec![0.4, -0.1]);
    }
}
