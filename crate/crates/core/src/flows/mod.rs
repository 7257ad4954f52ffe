//! Hamiltonian flows, the exponential map on fields tangent to a
//! fibration, and its right inverse on paths of maps.

mod field;
pub mod integrator;
mod map;
pub mod path;
pub mod probes;

use serde::{Deserialize, Serialize};

pub use field::FieldSource;
pub use integrator::{integrate, IntegratorOptions};
pub use map::{MapSpec, NumericMap, Primitive, StepSpec};
pub use path::{path_to_field, recover_autonomous, PathFieldOptions, PathOfMaps, RecoveryReport, SampledField};
pub use probes::Region;

use crate::error::{Error, Result};
use crate::expr::{ExprBundle, HamiltonianExpr, Layout};
use crate::par;

/// Number of quasi-random points used by the tangency precheck.
pub const ALGEBRA_CHECK_POINTS: usize = 32;
/// Bracket threshold of the tangency precheck.
pub const ALGEBRA_CHECK_THRESHOLD: f64 = 1e-7;

/// The components `F_1, ..., F_k` of a moment map.
#[derive(Debug, Clone)]
pub struct MomentMap {
    components: Vec<HamiltonianExpr>,
    values: ExprBundle,
    layout: Layout,
}

impl MomentMap {
    pub fn new(components: Vec<HamiltonianExpr>, layout: Layout) -> Result<MomentMap> {
        let components = components
            .into_iter()
            .map(|c| c.with_layout(layout))
            .collect::<Result<Vec<_>>>()?;
        let values = ExprBundle::new(&components, layout)?;
        Ok(MomentMap {
            components,
            values,
            layout,
        })
    }

    pub fn parse(texts: &[&str], layout: Layout) -> Result<MomentMap> {
        let comps = texts
            .iter()
            .map(|t| HamiltonianExpr::parse_on(t, layout))
            .collect::<Result<Vec<_>>>()?;
        MomentMap::new(comps, layout)
    }

    pub fn components(&self) -> &[HamiltonianExpr] {
        &self.components
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.values.eval(z)
    }

    /// `max_i |F_i(image) - F_i(z)|`.
    pub fn residual(&self, z: &[f64], image: &[f64]) -> f64 {
        self.eval(z)
            .iter()
            .zip(self.eval(image))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max_i |{F_i, G}(z)| = max_i |∇F_i(z) · X_G(z)|`.
    pub fn bracket_with(&self, field: &FieldSource, z: &[f64]) -> f64 {
        let x = field.eval(z);
        self.components
            .iter()
            .map(|c| {
                c.gradient(z)
                    .iter()
                    .zip(&x)
                    .map(|(g, v)| g * v)
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Whether every component satisfies `F(sz) = s²F(z)` at the probes.
    pub fn is_homogeneous_quadratic(&self, probes: &[Vec<f64>]) -> bool {
        probes.iter().all(|z| {
            let f = self.eval(z);
            [0.5, 2.0].iter().all(|&s| {
                let sz: Vec<f64> = z.iter().map(|v| v * s).collect();
                self.eval(&sz)
                    .iter()
                    .zip(&f)
                    .all(|(a, b)| (a - s * s * b).abs() <= 1e-12 * (1.0 + a.abs()))
            })
        })
    }
}

/// Tangency precheck: `|{F_i, G}| ≤ 1e-7` at 32 Halton points of `region`.
/// Returns the largest bracket found.
pub fn check_in_algebra(field: &FieldSource, moment: &MomentMap, region: &Region) -> Result<f64> {
    if field.dim() != moment.dim() || region.dim() != moment.dim() {
        return Err(Error::Dimension {
            expected: moment.dim(),
            found: field.dim(),
        });
    }
    let pts = region.halton(ALGEBRA_CHECK_POINTS);
    let worst = par::map(&pts, |z| moment.bracket_with(field, z))
        .into_iter()
        .fold(0.0, f64::max);
    if worst > ALGEBRA_CHECK_THRESHOLD {
        return Err(Error::NotInAlgebra {
            residual: worst,
            threshold: ALGEBRA_CHECK_THRESHOLD,
        });
    }
    Ok(worst)
}

/// `φ_X^t(pt)` integrated to local tolerance `tol`.
pub fn flow(field: &FieldSource, t: f64, pt: &[f64], tol: f64) -> Result<Vec<f64>> {
    if pt.len() != field.dim() {
        return Err(Error::Dimension {
            expected: field.dim(),
            found: pt.len(),
        });
    }
    integrate(field.rhs(), pt, t, &IntegratorOptions::with_tol(tol))
}

/// Samples of a trajectory at `steps + 1` equally spaced times.
pub fn flow_trace(field: &FieldSource, t: f64, pt: &[f64], steps: usize, tol: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    let steps = steps.max(1);
    let dt = t / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = pt.to_vec();
    out.push((0.0, cur.clone()));
    for i in 1..=steps {
        cur = flow(field, dt, &cur, tol)?;
        out.push((dt * i as f64, cur.clone()));
    }
    Ok(out)
}

/// `exp(X) = φ_X^1` for a field tangent to the fibres of `moment`.
pub fn exponential(field: &FieldSource, moment: &MomentMap, region: &Region, tol: f64) -> Result<NumericMap> {
    check_in_algebra(field, moment, region)?;
    Ok(NumericMap::flow(field.clone(), 1.0, tol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutingReport {
    pub max_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

/// `max |φ_{X1+X2}^s − φ_{X1}^s ∘ φ_{X2}^s|` over `pts`. Flows are
/// integrated at `tol / 100` so that integrator error stays well inside the
/// pass threshold `tol`.
pub fn verify_commuting_flows(
    f1: &FieldSource,
    f2: &FieldSource,
    s: f64,
    pts: &[Vec<f64>],
    moment: &MomentMap,
    region: &Region,
    tol: f64,
) -> Result<CommutingReport> {
    check_in_algebra(f1, moment, region)?;
    check_in_algebra(f2, moment, region)?;
    let sum = f1.plus(f2)?;
    let itol = tol / 100.0;
    let res = par::map(pts, |z| -> Result<f64> {
        let a = flow(&sum, s, z, itol)?;
        let b = flow(f1, s, &flow(f2, s, z, itol)?, itol)?;
        Ok(a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
    });
    let max_residual = par::collect_results(res)?.into_iter().fold(0.0, f64::max);
    Ok(CommutingReport {
        max_residual,
        tol,
        passed: max_residual < tol,
    })
}

/// Smallest `c` in `(c_min, c_max]` with `exp(c·X_h)(z0) = z0`: the return
/// distance is scanned on a grid, and its first near-zero dip is refined by
/// golden-section search (the distance is V-shaped at the root).
pub fn kernel_period(h: &HamiltonianExpr, z0: &[f64], c_min: f64, c_max: f64, scan: usize, tol: f64) -> Result<f64> {
    let dist = |c: f64| -> Result<f64> {
        let f = FieldSource::hamiltonian(h.scale(c));
        let z = flow(&f, 1.0, z0, tol)?;
        Ok(z.iter().zip(z0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
    };
    let scale = z0.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let scan = scan.max(8);
    let dc = (c_max - c_min) / scan as f64;
    let grid: Vec<f64> = (0..=scan).map(|i| c_min + dc * i as f64).collect();
    let d = par::collect_results(par::map(&grid, |&c| dist(c)))?;
    for i in 1..scan {
        if d[i] <= d[i - 1] && d[i] <= d[i + 1] && d[i] < 0.5 * scale {
            let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = b - g * (b - a);
            let mut x2 = a + g * (b - a);
            let mut f1 = dist(x1)?;
            let mut f2 = dist(x2)?;
            while b - a > 1e-13 * b.abs().max(1.0) {
                if f1 < f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - g * (b - a);
                    f1 = dist(x1)?;
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + g * (b - a);
                    f2 = dist(x2)?;
                }
            }
            let c = 0.5 * (a + b);
            if dist(c)? > 1e-6 * scale {
                continue;
            }
            return Ok(c);
        }
    }
    Err(Error::NotFound(format!(
        "no return of the flow for c in ({c_min}, {c_max}]"
    )))
}
