//! Paths of maps and the field `Y = ∫₀¹ X_t dt` with `X_t ∘ R_t = dR_t/dt`.
//!
//! `X_{t_k}(w)` is a finite-difference derivative in `s` of `R_s(R_{t_k}⁻¹ w)`
//! over the sample grid, and `Y(w)` is the composite Simpson sum over the
//! samples. `Y` is evaluated on demand at the query point, so it carries no
//! interpolation error on top of the quadrature and stencil errors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Scalar;
use crate::par;

use super::field::FieldSource;
use super::map::NumericMap;
use super::MomentMap;

/// Weights of the derivative of order `m` at `x0` on nodes `xs`
/// (Fornberg's recursion).
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Composite Simpson weights on `n` (odd) uniform nodes over `[a, b]`.
pub fn simpson_weights(n: usize, a: f64, b: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "Simpson rule needs an odd number of nodes");
    let h = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Samples `R_{t_j}` of a path of maps on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PathOfMaps {
    times: Vec<f64>,
    maps: Vec<NumericMap>,
    starts_at_identity: bool,
}

impl PathOfMaps {
    /// Samples `f` at `samples` uniform times (odd, ≥ 7 for the default
    /// stencil).
    pub fn from_fn<F>(samples: usize, starts_at_identity: bool, f: F) -> Result<PathOfMaps>
    where
        F: Fn(f64) -> Result<NumericMap>,
    {
        if samples < 3 || samples.is_multiple_of(2) {
            return Err(Error::Precondition(format!(
                "path needs an odd number (≥ 3) of samples, got {samples}"
            )));
        }
        let times: Vec<f64> = (0..samples).map(|i| i as f64 / (samples - 1) as f64).collect();
        let maps = times.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        PathOfMaps::new(times, maps, starts_at_identity)
    }

    pub fn new(times: Vec<f64>, maps: Vec<NumericMap>, starts_at_identity: bool) -> Result<PathOfMaps> {
        if times.len() != maps.len() || times.len() < 3 {
            return Err(Error::Precondition("one map per sample time, at least 3".into()));
        }
        let n = times.len();
        let h = 1.0 / (n - 1) as f64;
        let uniform = times
            .iter()
            .enumerate()
            .all(|(i, t)| (t - i as f64 * h).abs() < 1e-12);
        if !uniform || n.is_multiple_of(2) {
            return Err(Error::Precondition(
                "sample times must be an odd-sized uniform grid of [0, 1]".into(),
            ));
        }
        let dim = maps[0].dim();
        if let Some(m) = maps.iter().find(|m| m.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: m.dim(),
            });
        }
        Ok(PathOfMaps {
            times,
            maps,
            starts_at_identity,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn maps(&self) -> &[NumericMap] {
        &self.maps
    }

    pub fn end(&self) -> &NumericMap {
        self.maps.last().expect("nonempty path")
    }

    pub fn dim(&self) -> usize {
        self.maps[0].dim()
    }

    pub fn starts_at_identity(&self) -> bool {
        self.starts_at_identity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFieldOptions {
    /// Accuracy order of the finite-difference stencil (even; `order + 1`
    /// points).
    pub stencil_order: usize,
    /// Threshold for the per-sample symplecticity and moment-map checks.
    pub check_tol: f64,
}

impl Default for PathFieldOptions {
    fn default() -> Self {
        PathFieldOptions {
            stencil_order: 6,
            check_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    weight: f64,
    inverse: NumericMap,
    /// `(c_j, R_{t_j})`; `None` stands for the node itself, whose term is
    /// `R_{t_k}(R_{t_k}⁻¹ w) = w`.
    stencil: Vec<(f64, Option<NumericMap>)>,
}

/// The averaged velocity field of a path of maps.
#[derive(Debug, Clone)]
pub struct SampledField {
    dim: usize,
    nodes: Vec<Node>,
}

impl SampledField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_trivially_zero(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eval_into<S: Scalar>(&self, w: &[S], out: &mut [S]) {
        out.iter_mut().for_each(|o| *o = S::cst(0.0));
        for node in &self.nodes {
            let u = match node.inverse.eval(w) {
                Ok(u) => u,
                Err(_) => {
                    out.iter_mut().for_each(|o| *o = S::cst(f64::NAN));
                    return;
                }
            };
            for (c, map) in &node.stencil {
                let r = match map {
                    None => w.to_vec(),
                    Some(m) => match m.eval(&u) {
                        Ok(r) => r,
                        Err(_) => {
                            out.iter_mut().for_each(|o| *o = S::cst(f64::NAN));
                            return;
                        }
                    },
                };
                let cw = c * node.weight;
                for (o, v) in out.iter_mut().zip(&r) {
                    *o += v.scale(cw);
                }
            }
        }
    }

    /// `X_{t_k}(w)` for one sample index.
    pub fn velocity_at_sample(&self, k: usize, w: &[f64]) -> Result<Vec<f64>> {
        let node = self
            .nodes
            .get(k)
            .ok_or_else(|| Error::Precondition(format!("no sample {k}")))?;
        let u = node.inverse.eval(w)?;
        let mut out = vec![0.0; w.len()];
        for (c, map) in &node.stencil {
            let r = match map {
                None => w.to_vec(),
                Some(m) => m.eval(&u)?,
            };
            for (o, v) in out.iter_mut().zip(&r) {
                *o += c * v;
            }
        }
        Ok(out)
    }
}

/// Per-sample check results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub max_symplectic_residual: f64,
    pub max_moment_residual: f64,
    pub start_residual: f64,
    /// Index of the worst sample.
    pub worst_sample: usize,
}

/// Checks every sample for symplecticity and moment-map preservation at
/// the probes, and that the path starts at the identity if declared.
pub fn check_path(path: &PathOfMaps, probes: &[Vec<f64>], moment: &MomentMap) -> Result<PathCheck> {
    let per_sample = par::map(path.maps(), |m| -> Result<(f64, f64)> {
        let mut s = 0.0f64;
        let mut f = 0.0f64;
        for z in probes {
            let (v, jac) = m.value_and_jacobian(z)?;
            s = s.max(crate::linalg::symplectic_residual(&jac));
            f = f.max(moment.residual(z, &v));
        }
        Ok((s, f))
    });
    let per_sample = par::collect_results(per_sample)?;
    let mut check = PathCheck {
        max_symplectic_residual: 0.0,
        max_moment_residual: 0.0,
        start_residual: 0.0,
        worst_sample: 0,
    };
    for (i, (s, f)) in per_sample.iter().enumerate() {
        if s.max(*f) > check.max_symplectic_residual.max(check.max_moment_residual) {
            check.worst_sample = i;
        }
        check.max_symplectic_residual = check.max_symplectic_residual.max(*s);
        check.max_moment_residual = check.max_moment_residual.max(*f);
    }
    if path.starts_at_identity {
        for z in probes {
            let r = path.maps[0].apply(z)?;
            let d = r.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            check.start_residual = check.start_residual.max(d);
        }
    }
    Ok(check)
}

/// Builds `Y = ∫₀¹ X_t dt` for a path starting at the identity, after
/// checking every sample against the probes.
pub fn path_to_field(
    path: &PathOfMaps,
    probes: &[Vec<f64>],
    moment: &MomentMap,
    opts: &PathFieldOptions,
) -> Result<SampledField> {
    if !path.starts_at_identity {
        return Err(Error::UnsupportedPath("path must start at the identity".into()));
    }
    let check = check_path(path, probes, moment)?;
    let worst = check
        .max_symplectic_residual
        .max(check.max_moment_residual)
        .max(check.start_residual);
    if worst > opts.check_tol {
        return Err(Error::Rejected(format!(
            "path sample {} fails the membership check: symplectic {:e}, moment map {:e}, start {:e} (threshold {:e})",
            check.worst_sample,
            check.max_symplectic_residual,
            check.max_moment_residual,
            check.start_residual,
            opts.check_tol
        )));
    }
    Ok(build_field(path, opts.stencil_order))
}

/// [`path_to_field`] without the membership checks.
pub fn build_field(path: &PathOfMaps, stencil_order: usize) -> SampledField {
    let n = path.times.len();
    let width = (stencil_order + 1).min(n);
    let weights = simpson_weights(n, 0.0, 1.0);
    let all_identity = path.maps.iter().all(NumericMap::is_identity);
    if all_identity {
        return SampledField {
            dim: path.dim(),
            nodes: Vec::new(),
        };
    }
    let nodes = (0..n)
        .map(|k| {
            let start = k.saturating_sub(width / 2).min(n - width);
            let idx: Vec<usize> = (start..start + width).collect();
            let xs: Vec<f64> = idx.iter().map(|&j| path.times[j]).collect();
            let c = fornberg_weights(path.times[k], &xs, 1);
            let stencil = idx
                .iter()
                .zip(c)
                .filter(|(_, c)| *c != 0.0)
                .map(|(&j, c)| (c, if j == k { None } else { Some(path.maps[j].clone()) }))
                .collect();
            Node {
                weight: weights[k],
                inverse: path.maps[k].inverse(),
                stencil,
            }
        })
        .collect();
    SampledField {
        dim: path.dim(),
        nodes,
    }
}

/// Error budget of the time-1 map of `Y` against the path end:
/// `2(Δt⁴ + 10³·tol)`. The Simpson term dominates at the default stencil
/// order; the tolerance term covers integrator noise amplified by the
/// stencil weights.
pub fn path_budget(samples: usize, tol: f64) -> f64 {
    let dt = 1.0 / (samples.max(2) - 1) as f64;
    2.0 * (dt.powi(4) + 1e3 * tol)
}

/// Result of [`recover_autonomous`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub samples: usize,
    pub tol: f64,
    pub check: PathCheck,
    /// `max |φ_Y^1 − φ_Z^1|` over the probes.
    pub max_residual: f64,
    pub budget: f64,
    pub passed: bool,
}

/// Samples the path `t ↦ φ_Z^t`, recovers its field `Y` with
/// [`path_to_field`], and compares the time-1 maps of `Y` and `Z`.
pub fn recover_autonomous(
    z: &FieldSource,
    probes: &[Vec<f64>],
    moment: &MomentMap,
    samples: usize,
    tol: f64,
    opts: &PathFieldOptions,
) -> Result<RecoveryReport> {
    let path = PathOfMaps::from_fn(samples, true, |t| Ok(NumericMap::flow(z.clone(), t, tol)))?;
    let check = check_path(&path, probes, moment)?;
    let y = FieldSource::Sampled(Arc::new(path_to_field(&path, probes, moment, opts)?));
    let res = par::map(probes, |p| -> Result<f64> {
        let a = super::flow(&y, 1.0, p, tol)?;
        let b = super::flow(z, 1.0, p, tol)?;
        Ok(a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
    });
    let max_residual = par::collect_results(res)?.into_iter().fold(0.0, f64::max);
    let budget = path_budget(samples, tol);
    Ok(RecoveryReport {
        samples,
        tol,
        check,
        max_residual,
        budget,
        passed: max_residual < budget,
    })
}
