//! Action variables of one-degree-of-freedom systems from period integrals.
//!
//! Cycles are traced by flowing `X_H` from a point on a half-line and
//! stopping at the first positively oriented return to the section through
//! that point. Cycles are oriented by the flow. For `H = x² + y²` the
//! motion is clockwise and every tag gives the action `+πE`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{HamiltonianExpr, Layout};
use crate::flows::integrator::{integrate_observed, single_step, Control, IntegratorOptions};
use crate::flows::Region;
use crate::par;

/// Primitive `β` of the symplectic form, `dβ = dy ∧ dx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveTag {
    /// `y dx`
    YDx,
    /// `−x dy`
    MinusXDy,
    /// `(y dx − x dy)/2`
    Symmetric,
}

impl PrimitiveTag {
    pub const ALL: [PrimitiveTag; 3] = [PrimitiveTag::YDx, PrimitiveTag::MinusXDy, PrimitiveTag::Symmetric];

    fn index(self) -> usize {
        match self {
            PrimitiveTag::YDx => 0,
            PrimitiveTag::MinusXDy => 1,
            PrimitiveTag::Symmetric => 2,
        }
    }

    /// `(β_x, β_y)` with `β = β_x dx + β_y dy`.
    pub fn coefficients(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            PrimitiveTag::YDx => (y, 0.0),
            PrimitiveTag::MinusXDy => (0.0, -x),
            PrimitiveTag::Symmetric => (0.5 * y, -0.5 * x),
        }
    }

    pub fn parse(s: &str) -> Result<PrimitiveTag> {
        match s {
            "ydx" | "y_dx" => Ok(PrimitiveTag::YDx),
            "-xdy" | "minus_x_dy" => Ok(PrimitiveTag::MinusXDy),
            "sym" | "symmetric" => Ok(PrimitiveTag::Symmetric),
            other => Err(Error::UnknownIdentifier(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanarSystem {
    pub h: HamiltonianExpr,
    pub domain: Region,
    pub tag: PrimitiveTag,
    /// Base point of the start half-line.
    pub center: [f64; 2],
    /// Direction of the start half-line.
    pub ray: [f64; 2],
}

impl PlanarSystem {
    /// System on the square `[-r, r]²` with the half-line `{(s, 0), s > 0}`.
    pub fn new(h: HamiltonianExpr, r: f64) -> Result<PlanarSystem> {
        if h.dim() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                found: h.dim(),
            });
        }
        Ok(PlanarSystem {
            h,
            domain: Region::cube(2, r),
            tag: PrimitiveTag::Symmetric,
            center: [0.0, 0.0],
            ray: [1.0, 0.0],
        })
    }

    pub fn parse(text: &str, r: f64) -> Result<PlanarSystem> {
        PlanarSystem::new(HamiltonianExpr::parse_on(text, Layout::fiber(1))?, r)
    }

    pub fn with_tag(mut self, tag: PrimitiveTag) -> PlanarSystem {
        self.tag = tag;
        self
    }

    /// The system transported by `(x, y) ↦ (−x, −y)`, together with its
    /// domain and start half-line.
    pub fn flipped(&self) -> PlanarSystem {
        PlanarSystem {
            h: self.h.compose_linear(&[vec![-1.0, 0.0], vec![0.0, -1.0]]),
            domain: Region {
                lo: self.domain.hi.iter().map(|v| -v).collect(),
                hi: self.domain.lo.iter().map(|v| -v).collect(),
            },
            tag: self.tag,
            center: [-self.center[0], -self.center[1]],
            ray: [-self.ray[0], -self.ray[1]],
        }
    }

    fn gradient(&self, z: [f64; 2]) -> [f64; 2] {
        let g = self.h.gradient_forward(&z);
        [g[0], g[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    pub tol: f64,
    /// Give up after this much flow time.
    pub max_time: f64,
    /// Minimal `|∇H|` along the cycle.
    pub regularity: f64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            tol: 1e-12,
            max_time: 1e3,
            regularity: 1e-8,
        }
    }
}

impl CycleOptions {
    pub fn with_tol(tol: f64) -> CycleOptions {
        CycleOptions {
            tol,
            ..CycleOptions::default()
        }
    }
}

/// A traced closed orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub energy: f64,
    /// Flow points, starting and ending on the section.
    pub points: Vec<[f64; 2]>,
    pub period: f64,
    pub closure_gap: f64,
    /// `∮β` for the three tags, in [`PrimitiveTag::ALL`] order.
    pub integrals: [f64; 3],
}

impl Cycle {
    pub fn action(&self, tag: PrimitiveTag) -> f64 {
        self.integrals[tag.index()]
    }

    /// Largest difference between the three tags.
    pub fn tag_spread(&self) -> f64 {
        let [a, b, c] = self.integrals;
        (a - b).abs().max((a - c).abs()).max((b - c).abs())
    }
}

/// First point with `H = e` on the start half-line.
fn start_point(sys: &PlanarSystem, e: f64) -> Result<[f64; 2]> {
    let along = |s: f64| [sys.center[0] + s * sys.ray[0], sys.center[1] + s * sys.ray[1]];
    let mut s_max = f64::INFINITY;
    for k in 0..2 {
        let d = sys.ray[k];
        if d > 0.0 {
            s_max = s_max.min((sys.domain.hi[k] - sys.center[k]) / d);
        } else if d < 0.0 {
            s_max = s_max.min((sys.domain.lo[k] - sys.center[k]) / d);
        }
    }
    if !s_max.is_finite() || s_max <= 0.0 {
        return Err(Error::Precondition("start half-line leaves the domain immediately".into()));
    }
    let g = |s: f64| sys.h.eval(&along(s)) - e;
    let scan = 400;
    let mut a = 0.0;
    let mut ga = g(a);
    for i in 1..=scan {
        let b = s_max * i as f64 / scan as f64;
        let gb = g(b);
        if ga == 0.0 && i > 1 {
            return Ok(along(a));
        }
        if ga * gb < 0.0 {
            let (mut lo, mut hi, mut glo) = (a, b, ga);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == (glo < 0.0) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            return Ok(along(0.5 * (lo + hi)));
        }
        a = b;
        ga = gb;
    }
    Err(Error::Precondition(format!(
        "energy {e} is not reached on the start half-line inside the domain"
    )))
}

/// Traces the orbit of `speed·X_H` at energy `e`.
fn trace_scaled(sys: &PlanarSystem, e: f64, speed: f64, opts: &CycleOptions) -> Result<Cycle> {
    let z0 = start_point(sys, e)?;
    let g0 = sys.gradient(z0);
    let gn = g0[0].hypot(g0[1]);
    if !(gn > opts.regularity) {
        return Err(Error::Precondition(format!(
            "energy {e} is not a regular value: |∇H| = {gn:e} at {z0:?}"
        )));
    }
    // section normal: the velocity at the start point
    let v0 = [speed * g0[1], -speed * g0[0]];
    let section = |z: &[f64]| (z[0] - z0[0]) * v0[0] + (z[1] - z0[1]) * v0[1];
    let prog = sys.h.field_program().clone();
    let mut scratch = Vec::new();
    let mut rhs = move |s: &[f64], out: &mut [f64]| {
        let mut v = [0.0; 2];
        prog.eval_into(&s[..2], &mut v, &mut scratch);
        let (dx, dy) = (speed * v[0], speed * v[1]);
        out[0] = dx;
        out[1] = dy;
        for (k, tag) in PrimitiveTag::ALL.iter().enumerate() {
            let (bx, by) = tag.coefficients(s[0], s[1]);
            out[2 + k] = bx * dx + by * dy;
        }
    };
    let state0 = [z0[0], z0[1], 0.0, 0.0, 0.0];
    let diameter = sys
        .domain
        .lo
        .iter()
        .zip(&sys.domain.hi)
        .map(|(a, b)| (b - a).powi(2))
        .sum::<f64>()
        .sqrt();
    let iopts = IntegratorOptions {
        tol: opts.tol,
        escape_radius: 1e6,
        max_steps: 2_000_000,
        max_step: diameter / (200.0 * speed.abs() * gn.max(1e-300)),
    };
    let mut points = vec![z0];
    let mut far = 0.0f64;
    let mut hit: Option<(f64, Vec<f64>, f64)> = None;
    let mut failure: Option<Error> = None;
    let mut min_grad = f64::INFINITY;
    let result = integrate_observed(&mut rhs, &state0, opts.max_time, &iopts, |tp, yp, t, y| {
        if !sys.domain.contains(&y[..2]) {
            failure = Some(Error::OpenCycle(format!(
                "trajectory at energy {e} left the domain at t = {t} ({:?})",
                &y[..2]
            )));
            return Control::Stop;
        }
        let g = sys.gradient([y[0], y[1]]);
        min_grad = min_grad.min(g[0].hypot(g[1]));
        let d = (y[0] - z0[0]).hypot(y[1] - z0[1]);
        far = far.max(d);
        let (sp, sn) = (section(yp), section(y));
        if sp < 0.0 && sn >= 0.0 && d < 0.5 * far {
            hit = Some((tp, yp.to_vec(), t - tp));
            return Control::Stop;
        }
        points.push([y[0], y[1]]);
        Control::Continue
    });
    if let Some(err) = failure {
        return Err(err);
    }
    match result {
        Err(Error::Escape { time }) => {
            return Err(Error::OpenCycle(format!("trajectory at energy {e} escaped at t = {time}")))
        }
        Err(other) => return Err(other),
        Ok(_) => {}
    }
    if !(min_grad > opts.regularity) {
        return Err(Error::Precondition(format!(
            "energy {e} is not a regular value: |∇H| dropped to {min_grad:e}"
        )));
    }
    let (tp, yp, h_max) = hit.ok_or_else(|| {
        Error::OpenCycle(format!(
            "no return to the section at energy {e} within time {}",
            opts.max_time
        ))
    })?;
    // bisection on the step size for the section crossing
    let (mut lo, mut hi) = (0.0, h_max);
    let mut end = yp.clone();
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y = single_step(&mut rhs, &yp, mid);
        if section(&y) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            end = y;
        }
    }
    if hi == h_max {
        end = single_step(&mut rhs, &yp, h_max);
    }
    points.push([end[0], end[1]]);
    Ok(Cycle {
        energy: e,
        period: tp + hi,
        closure_gap: (end[0] - z0[0]).hypot(end[1] - z0[1]),
        integrals: [end[2], end[3], end[4]],
        points,
    })
}

/// Closed orbit of `X_H` at energy `e`.
pub fn trace_cycle(sys: &PlanarSystem, e: f64, opts: &CycleOptions) -> Result<Cycle> {
    trace_scaled(sys, e, 1.0, opts)
}

/// `∮β` over the cycle at energy `e`, for the system's tag.
pub fn action_integral(sys: &PlanarSystem, e: f64, opts: &CycleOptions) -> Result<f64> {
    Ok(trace_cycle(sys, e, opts)?.action(sys.tag))
}

/// Signed area enclosed by a polyline, counted positively for clockwise
/// loops so that it matches the flow orientation.
pub fn shoelace(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    -0.5 * s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    pub energies: Vec<f64>,
    pub actions: Vec<f64>,
    pub periods: Vec<f64>,
    pub tag_spreads: Vec<f64>,
    pub closure_gaps: Vec<f64>,
    /// Strictly increasing or strictly decreasing in `E`.
    pub monotone: bool,
}

pub fn action_profile(sys: &PlanarSystem, energies: &[f64], opts: &CycleOptions) -> Result<ActionProfile> {
    let cycles = par::collect_results(par::map(energies, |&e| trace_cycle(sys, e, opts)))?;
    let actions: Vec<f64> = cycles.iter().map(|c| c.action(sys.tag)).collect();
    let inc = actions.windows(2).all(|w| w[1] > w[0]);
    let dec = actions.windows(2).all(|w| w[1] < w[0]);
    Ok(ActionProfile {
        energies: energies.to_vec(),
        periods: cycles.iter().map(|c| c.period).collect(),
        tag_spreads: cycles.iter().map(Cycle::tag_spread).collect(),
        closure_gaps: cycles.iter().map(|c| c.closure_gap).collect(),
        monotone: inc || dec,
        actions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSample {
    pub energy: f64,
    /// Richardson-extrapolated central difference of `p(E)`.
    pub dp_de: f64,
    /// Spread between the two difference quotients.
    pub derivative_noise: f64,
    pub period: f64,
    /// `|dp/dE − T| / T`.
    pub period_mismatch: f64,
    /// Measured return time of the flow of `p ∘ H`.
    pub return_time: f64,
    pub status: PeriodStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub samples: Vec<PeriodSample>,
    pub max_period_mismatch: f64,
    pub max_return_residual: f64,
    pub status: PeriodStatus,
}

/// Thresholds for [`verify_period_one`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodOptions {
    pub cycle: CycleOptions,
    /// Relative step for the difference quotients.
    pub rel_step: f64,
    /// Allowed `|return time − 1|` and relative period mismatch.
    pub tol: f64,
}

impl Default for PeriodOptions {
    fn default() -> Self {
        PeriodOptions {
            cycle: CycleOptions::default(),
            rel_step: 1e-3,
            tol: 1e-4,
        }
    }
}

/// Checks at each profile energy that `dp/dE` is the period of `X_H`, so
/// that the flow of the action function `p ∘ H` returns in time 1.
pub fn verify_period_one(sys: &PlanarSystem, profile: &ActionProfile, opts: &PeriodOptions) -> Result<PeriodReport> {
    let samples = par::collect_results(par::map(&profile.energies, |&e| -> Result<PeriodSample> {
        let h = opts.rel_step * e.abs().max(1e-3);
        let p = |v: f64| trace_cycle(sys, v, &opts.cycle).map(|c| c.action(sys.tag));
        let (p1m, p1p) = (p(e - h)?, p(e + h)?);
        let (p2m, p2p) = (p(e - 2.0 * h)?, p(e + 2.0 * h)?);
        let d1 = (p1p - p1m) / (2.0 * h);
        let d2 = (p2p - p2m) / (4.0 * h);
        let dp_de = (4.0 * d1 - d2) / 3.0;
        let derivative_noise = (d1 - d2).abs();
        let cycle = trace_cycle(sys, e, &opts.cycle)?;
        let period_mismatch = (dp_de - cycle.period).abs() / cycle.period.abs();
        let return_time = trace_scaled(sys, e, dp_de, &opts.cycle)?.period;
        let status = if derivative_noise > opts.tol * dp_de.abs() {
            PeriodStatus::Inconclusive
        } else if period_mismatch < opts.tol && (return_time - 1.0).abs() < opts.tol {
            PeriodStatus::Pass
        } else {
            PeriodStatus::Fail
        };
        Ok(PeriodSample {
            energy: e,
            dp_de,
            derivative_noise,
            period: cycle.period,
            period_mismatch,
            return_time,
            status,
        })
    }))?;
    let status = if samples.iter().any(|s| s.status == PeriodStatus::Fail) {
        PeriodStatus::Fail
    } else if samples.iter().any(|s| s.status == PeriodStatus::Inconclusive) {
        PeriodStatus::Inconclusive
    } else {
        PeriodStatus::Pass
    };
    Ok(PeriodReport {
        max_period_mismatch: samples.iter().map(|s| s.period_mismatch).fold(0.0, f64::max),
        max_return_residual: samples.iter().map(|s| (s.return_time - 1.0).abs()).fold(0.0, f64::max),
        samples,
        status,
    })
}

/// Actions of a product of planar blocks, one cycle per block.
pub fn product_actions(systems: &[PlanarSystem], energies: &[f64], opts: &CycleOptions) -> Result<Vec<f64>> {
    if systems.len() != energies.len() {
        return Err(Error::Dimension {
            expected: systems.len(),
            found: energies.len(),
        });
    }
    let idx: Vec<usize> = (0..systems.len()).collect();
    par::collect_results(par::map(&idx, |&i| {
        action_integral(&systems[i], energies[i], opts)
            .map_err(|e| Error::Precondition(format!("block {i}: {e}")))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle() -> PlanarSystem {
        PlanarSystem::parse("x1^2 + y1^2", 2.0).unwrap()
    }

    #[test]
    fn circle_cycle_closes() {
        let c = trace_cycle(&circle(), 1.0, &CycleOptions::default()).unwrap();
        assert!(c.closure_gap < 1e-9);
        assert!((c.period - PI).abs() < 1e-9);
        assert!(c.points.iter().all(|p| (p[0].hypot(p[1]) - 1.0).abs() < 1e-9));
    }

    #[test]
    fn circle_action_is_area() {
        let opts = CycleOptions::default();
        for e in [0.25, 1.0, 2.5] {
            let c = trace_cycle(&circle(), e, &opts).unwrap();
            for tag in PrimitiveTag::ALL {
                assert!((c.action(tag) - PI * e).abs() < 10.0 * opts.tol * (1.0 + e), "{tag:?} {e}");
            }
            assert!(c.tag_spread() < 10.0 * opts.tol);
        }
    }

    #[test]
    fn shoelace_on_dense_polyline() {
        // oracle: area of the inscribed polygon from its central angles
        let c = trace_cycle(&circle(), 1.0, &CycleOptions::default()).unwrap();
        let pts = &c.points[..c.points.len() - 1];
        let inscribed: f64 = (0..pts.len())
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                let d = (a[1].atan2(a[0]) - b[1].atan2(b[0])).rem_euclid(2.0 * PI);
                0.5 * d.sin()
            })
            .sum();
        let a = shoelace(pts);
        assert!((a - inscribed).abs() < 1e-8, "{a} {inscribed}");
        assert!((a - PI).abs() < 1e-3);
    }

    #[test]
    fn hyperbola_does_not_close() {
        let sys = PlanarSystem::parse("x1*y1", 3.0).unwrap();
        let mut sys = sys;
        sys.ray = [1.0, 1.0];
        assert!(matches!(trace_cycle(&sys, 1.0, &CycleOptions::default()), Err(Error::OpenCycle(_))));
    }

    #[test]
    fn critical_value_rejected() {
        let r = trace_cycle(&circle(), 0.0, &CycleOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn small_energy_small_action() {
        let a = action_integral(&circle(), 1e-8, &CycleOptions::default()).unwrap();
        assert!(a.abs() < 1e-7);
    }

    #[test]
    fn harmonic_oscillator_period_one() {
        let sys = PlanarSystem::parse("(x1^2 + y1^2)/2", 2.0).unwrap();
        let es = [0.2, 0.5, 1.0];
        let prof = action_profile(&sys, &es, &CycleOptions::default()).unwrap();
        for (e, a) in es.iter().zip(&prof.actions) {
            assert!((a - 2.0 * PI * e).abs() < 1e-9);
        }
        let rep = verify_period_one(&sys, &prof, &PeriodOptions::default()).unwrap();
        assert_eq!(rep.status, PeriodStatus::Pass, "{rep:?}");
    }

    #[test]
    fn quartic_oscillator_period_one() {
        let sys = PlanarSystem::parse("(x1^2 + y1^2)/2 + x1^4/4", 3.0).unwrap();
        let prof = action_profile(&sys, &[0.1, 0.4, 0.8], &CycleOptions::default()).unwrap();
        assert!(prof.monotone);
        let rep = verify_period_one(&sys, &prof, &PeriodOptions::default()).unwrap();
        assert_eq!(rep.status, PeriodStatus::Pass, "{rep:?}");
    }

    #[test]
    fn flip_gives_identical_profile() {
        let sys = PlanarSystem::parse("x1^2 + y1^2 + 0.3*x1^3 + 0.1*x1*y1", 2.0).unwrap();
        let es = [0.1, 0.3];
        let a = action_profile(&sys, &es, &CycleOptions::default()).unwrap();
        let b = action_profile(&sys.flipped(), &es, &CycleOptions::default()).unwrap();
        for (u, v) in a.actions.iter().zip(&b.actions) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn product_of_blocks() {
        let sys = vec![circle(), circle()];
        let a = product_actions(&sys, &[0.5, 1.5], &CycleOptions::default()).unwrap();
        assert!((a[0] - 0.5 * PI).abs() < 1e-9 && (a[1] - 1.5 * PI).abs() < 1e-9);
        let b = product_actions(&sys, &[1.5, 0.5], &CycleOptions::default()).unwrap();
        assert_eq!(a[0], b[1]);
    }
}
