//! Linearization of compact group actions by averaging generators.
//!
//! For a map `g` preserving `ω` and a homogeneous quadratic moment map, the
//! homothety path `S_t = δ_{1/t} ∘ g ∘ δ_t` joins the linear part `g⁽¹⁾`
//! (at `t = 0`) to `g` (at `t = 1`) inside the group of such maps. The path
//! `R_t = g⁽¹⁾ ∘ S_t^{g⁻¹}` starts at the identity and ends at `g⁽¹⁾ ∘ g⁻¹`,
//! and its averaged velocity field generates that end point. Averaging the
//! generators over the group gives `X_G`, and `Φ_G = exp(X_G)` satisfies
//! `Φ_G ∘ ρ(g) = ρ(g)⁽¹⁾ ∘ Φ_G`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::path::{build_field, check_path, path_budget};
use crate::expr::Layout;
use crate::flows::{FieldSource, MapSpec, MomentMap, NumericMap, PathFieldOptions, PathOfMaps, Primitive, Region};
use crate::par;

/// Settings shared by the averaging operations.
#[derive(Debug, Clone)]
pub struct AveragingContext {
    pub moment: MomentMap,
    /// Points where memberships and conjugation identities are checked.
    pub probes: Vec<Vec<f64>>,
    /// Number of path samples (odd). Defaults to 129: flat generators have
    /// large fourth time derivatives, and 65 samples leave the Simpson error
    /// near 1e-6.
    pub samples: usize,
    /// Local tolerance of every flow.
    pub tol: f64,
    pub path: PathFieldOptions,
    /// Probes (taken from the front of `probes`) where `Φ_G` is
    /// differentiated for the symplecticity check.
    pub jacobian_probes: usize,
    /// Probes used for the group-closure check.
    pub closure_probes: usize,
}

impl AveragingContext {
    pub fn new(moment: MomentMap, probes: Vec<Vec<f64>>) -> AveragingContext {
        AveragingContext {
            moment,
            probes,
            samples: 129,
            tol: 1e-10,
            path: PathFieldOptions::default(),
            jacobian_probes: 2,
            closure_probes: 3,
        }
    }

    pub fn dim(&self) -> usize {
        self.moment.dim()
    }

    /// Conjugation budget: three path budgets, one for each of `Φ_G(gz)`,
    /// `Φ_G(z)` and the linear image of the latter.
    pub fn budget(&self) -> f64 {
        3.0 * path_budget(self.samples, self.tol)
    }
}

fn is_linear(map: &NumericMap) -> bool {
    map.steps().iter().all(|p| match p {
        Primitive::Affine { shift, .. } => shift.iter().all(|s| *s == 0.0),
        Primitive::Scale(_) => true,
        Primitive::Flow { .. } => false,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// `d₀φ`, after checking `|φ(0)| < tol`.
pub fn linear_part(map: &NumericMap, tol: f64) -> Result<DMatrix<f64>> {
    let zero = vec![0.0; map.dim()];
    let (value, jac) = map.value_and_jacobian(&zero)?;
    let off = value.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if off >= tol {
        return Err(Error::Precondition(format!(
            "map moves the origin by {off:e} (tolerance {tol:e})"
        )));
    }
    Ok(jac)
}

fn require_homogeneous(ctx: &AveragingContext) -> Result<()> {
    if !ctx.moment.is_homogeneous_quadratic(&ctx.probes) {
        return Err(Error::UnsupportedPath(
            "homothety paths need homogeneous quadratic moment-map components".into(),
        ));
    }
    Ok(())
}

/// `S_t = δ_{1/t} ∘ map ∘ δ_t` for `t ∈ (0, 1]`, and the linear part at
/// `t = 0`.
pub fn homothety_path(map: &NumericMap, t: f64, ctx: &AveragingContext) -> Result<NumericMap> {
    require_homogeneous(ctx)?;
    homothety_unchecked(map, t, ctx.tol)
}

fn homothety_unchecked(map: &NumericMap, t: f64, tol: f64) -> Result<NumericMap> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Precondition(format!("homothety parameter {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return NumericMap::linear(linear_part(map, tol.max(1e-12) * 10.0)?);
    }
    if t == 1.0 || is_linear(map) {
        return Ok(map.clone());
    }
    Ok(map.conjugate_by_scale(t))
}

/// Field whose time-1 map is `map⁽¹⁾ ∘ map⁻¹`, from the path
/// `R_t = map⁽¹⁾ ∘ S_t^{map⁻¹}`.
pub fn generator_for(map: &NumericMap, ctx: &AveragingContext) -> Result<FieldSource> {
    require_homogeneous(ctx)?;
    let l = linear_part(map, ctx.tol.max(1e-12) * 10.0)?;
    if is_linear(map) {
        return Ok(zero_field(ctx.dim()));
    }
    let lmap = NumericMap::linear(l)?;
    let inv = map.inverse();
    let path = PathOfMaps::from_fn(ctx.samples, true, |t| {
        if t == 0.0 {
            Ok(NumericMap::identity(map.dim()))
        } else {
            homothety_unchecked(&inv, t, ctx.tol)?.then(&lmap)
        }
    })?;
    field_from_path(&path, ctx)
}

fn zero_field(dim: usize) -> FieldSource {
    FieldSource::Sampled(Arc::new(build_field(
        &PathOfMaps::from_fn(3, true, |_| Ok(NumericMap::identity(dim))).expect("identity path"),
        2,
    )))
}

fn field_from_path(path: &PathOfMaps, ctx: &AveragingContext) -> Result<FieldSource> {
    let field = crate::flows::path_to_field(path, &ctx.probes, &ctx.moment, &ctx.path)?;
    Ok(FieldSource::Sampled(Arc::new(field)))
}

/// A compact group acting near the origin.
#[derive(Clone)]
pub enum GroupActionSpec {
    /// Finite group given by all its elements; `table[i][j]` is the index
    /// of `ρ(i) ∘ ρ(j)` if known, otherwise it is found at the probes.
    Finite {
        elements: Vec<NumericMap>,
        table: Option<Vec<Vec<usize>>>,
    },
    /// Circle `θ ↦ ρ(θ)`, `θ ∈ [0, 1)`, averaged with the trapezoid rule on
    /// `order` nodes.
    Circle {
        family: Arc<dyn Fn(f64) -> Result<NumericMap> + Send + Sync>,
        order: usize,
    },
}

impl std::fmt::Debug for GroupActionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupActionSpec::Finite { elements, .. } => write!(f, "Finite({} elements)", elements.len()),
            GroupActionSpec::Circle { order, .. } => write!(f, "Circle(order {order})"),
        }
    }
}

impl GroupActionSpec {
    pub fn finite(elements: Vec<NumericMap>) -> GroupActionSpec {
        GroupActionSpec::Finite {
            elements,
            table: None,
        }
    }

    /// Elements with their Haar weights.
    pub fn weighted_elements(&self) -> Result<Vec<(f64, NumericMap)>> {
        match self {
            GroupActionSpec::Finite { elements, .. } => {
                if elements.is_empty() {
                    return Err(Error::Precondition("empty group".into()));
                }
                let w = 1.0 / elements.len() as f64;
                Ok(elements.iter().map(|e| (w, e.clone())).collect())
            }
            GroupActionSpec::Circle { family, order } => {
                let order = (*order).max(1);
                let w = 1.0 / order as f64;
                (0..order)
                    .map(|j| Ok((w, family(j as f64 / order as f64)?)))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementResidual {
    pub element: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub per_element: Vec<ElementResidual>,
    pub max_residual: f64,
    pub budget: f64,
    /// `‖DΦᵀJDΦ − J‖` at the first `jacobian_probes` probes.
    pub symplectic_residual: f64,
    /// `|F(Φ(z)) − F(z)|` over all probes.
    pub moment_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct AveragingResult {
    pub phi_g: NumericMap,
    pub generator_field: FieldSource,
    pub residual_report: ResidualReport,
}

/// Rejects elements that move the origin or fail the membership check.
fn precheck_element(i: usize, g: &NumericMap, ctx: &AveragingContext) -> Result<DMatrix<f64>> {
    let l = linear_part(g, ctx.tol.max(1e-12) * 10.0)
        .map_err(|e| Error::Rejected(format!("element {i}: {e}")))?;
    for z in &ctx.probes {
        let (v, jac) = g.value_and_jacobian(z)?;
        let s = crate::linalg::symplectic_residual(&jac);
        let f = ctx.moment.residual(z, &v);
        if s.max(f) > ctx.path.check_tol {
            return Err(Error::Rejected(format!(
                "element {i}: symplectic residual {s:e}, moment-map residual {f:e} at {z:?}"
            )));
        }
    }
    Ok(l)
}

fn check_closure(elements: &[NumericMap], table: Option<&Vec<Vec<usize>>>, ctx: &AveragingContext) -> Result<()> {
    let probes: Vec<&Vec<f64>> = ctx.probes.iter().take(ctx.closure_probes.max(1)).collect();
    let images: Vec<Vec<Vec<f64>>> = elements
        .iter()
        .map(|e| probes.iter().map(|z| e.apply(z)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let thr = ctx.path.check_tol;
    let n = elements.len();
    let mut has_identity = false;
    for (k, img) in images.iter().enumerate() {
        if img.iter().zip(&probes).all(|(a, b)| max_abs_diff(a, b) < thr) {
            has_identity = true;
            let _ = k;
        }
    }
    if !has_identity {
        return Err(Error::Rejected("group elements do not contain the identity".into()));
    }
    for i in 0..n {
        let mut has_inverse = false;
        for j in 0..n {
            let comp: Vec<Vec<f64>> = images[j]
                .iter()
                .map(|z| elements[i].apply(z))
                .collect::<Result<Vec<_>>>()?;
            let matches = |k: usize| {
                comp.iter()
                    .zip(&images[k])
                    .all(|(a, b)| max_abs_diff(a, b) < thr)
            };
            let found = match table {
                Some(t) => {
                    let k = t[i][j];
                    if k >= n || !matches(k) {
                        return Err(Error::Rejected(format!(
                            "composition table entry ({i}, {j}) -> {k} does not hold"
                        )));
                    }
                    Some(k)
                }
                None => (0..n).find(|&k| matches(k)),
            };
            let k = found.ok_or_else(|| {
                Error::Rejected(format!("element {i} ∘ element {j} is not in the group"))
            })?;
            if comp.iter().zip(&probes).all(|(a, b)| max_abs_diff(a, b) < thr) {
                has_inverse = true;
            }
            let _ = k;
        }
        if !has_inverse {
            return Err(Error::Rejected(format!("element {i} has no inverse in the group")));
        }
    }
    Ok(())
}

/// Averages the generators over the group and checks the conjugation
/// identity `Φ_G ∘ ρ(g) = ρ(g)⁽¹⁾ ∘ Φ_G` at the probes.
pub fn average(action: &GroupActionSpec, ctx: &AveragingContext) -> Result<AveragingResult> {
    require_homogeneous(ctx)?;
    let elements = action.weighted_elements()?;
    let maps: Vec<NumericMap> = elements.iter().map(|(_, m)| m.clone()).collect();
    let linear = maps
        .iter()
        .enumerate()
        .map(|(i, g)| precheck_element(i, g, ctx))
        .collect::<Result<Vec<_>>>()?;
    if let GroupActionSpec::Finite { table, .. } = action {
        check_closure(&maps, table.as_ref(), ctx)?;
    }
    let idx: Vec<usize> = (0..maps.len()).collect();
    let fields = par::collect_results(par::map(&idx, |&i| {
        generator_for(&maps[i], ctx).map_err(|e| match e {
            Error::Rejected(m) => Error::Rejected(format!("element {i}: {m}")),
            other => other,
        })
    }))?;
    let terms: Vec<(f64, FieldSource)> = elements
        .iter()
        .zip(fields)
        .filter(|(_, f)| !f.is_trivially_zero())
        .map(|((w, _), f)| (*w, f))
        .collect();
    let generator_field = if terms.is_empty() {
        zero_field(ctx.dim())
    } else {
        FieldSource::Sum(terms)
    };
    let phi_g = NumericMap::flow(generator_field.clone(), 1.0, ctx.tol);
    let residual_report = conjugation_report(&phi_g, &maps, &linear, ctx)?;
    Ok(AveragingResult {
        phi_g,
        generator_field,
        residual_report,
    })
}

/// `max |Φ(ρ(g) z) − L_g Φ(z)|` per element, plus the invariance checks of
/// `Φ`.
pub fn conjugation_report(
    phi: &NumericMap,
    elements: &[NumericMap],
    targets: &[DMatrix<f64>],
    ctx: &AveragingContext,
) -> Result<ResidualReport> {
    let phi_z = par::collect_results(par::map(&ctx.probes, |z| phi.apply(z)))?;
    let moment_residual = ctx
        .probes
        .iter()
        .zip(&phi_z)
        .map(|(z, w)| ctx.moment.residual(z, w))
        .fold(0.0, f64::max);
    let jp: Vec<&Vec<f64>> = ctx.probes.iter().take(ctx.jacobian_probes).collect();
    let symplectic_residual = par::collect_results(par::map(&jp, |z| phi.symplectic_residual(z)))?
        .into_iter()
        .fold(0.0, f64::max);
    let mut per_element = Vec::with_capacity(elements.len());
    for (i, (g, l)) in elements.iter().zip(targets).enumerate() {
        let pairs: Vec<(usize, &Vec<f64>)> = ctx.probes.iter().enumerate().collect();
        let res = par::collect_results(par::map(&pairs, |(k, z)| -> Result<f64> {
            let lhs = phi.apply(&g.apply(z)?)?;
            let w = &phi_z[*k];
            let rhs: Vec<f64> = (0..w.len())
                .map(|r| (0..w.len()).map(|c| l[(r, c)] * w[c]).sum())
                .collect();
            Ok(max_abs_diff(&lhs, &rhs))
        }))?;
        per_element.push(ElementResidual {
            element: i,
            max_residual: res.into_iter().fold(0.0, f64::max),
        });
    }
    let max_residual = per_element.iter().map(|e| e.max_residual).fold(0.0, f64::max);
    let budget = ctx.budget();
    Ok(ResidualReport {
        passed: max_residual < budget && moment_residual < budget && symplectic_residual < ctx.path.check_tol,
        per_element,
        max_residual,
        budget,
        symplectic_residual,
        moment_residual,
    })
}

/// Result for one parameter value.
#[derive(Debug, Clone)]
pub struct ParametricResult {
    pub parameter: Vec<f64>,
    pub result: AveragingResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// `max_z |Φ_p(z) − Φ_{p'}(z)|` for consecutive grid parameters.
    pub adjacent_differences: Vec<f64>,
    /// Largest ratio of the above to `|p − p'|`.
    pub max_difference_quotient: f64,
}

/// Family version of [`average`]: for every parameter `p` on the grid the
/// element paths are `t ↦ ρ_0(g)⁽¹⁾ ∘ S_t^{ρ_{tp}(g)⁻¹}`, which start at the
/// identity and end at `ρ_0(g)⁽¹⁾ ∘ ρ_p(g)⁻¹`. The resulting `Φ_p`
/// conjugates `ρ_p` to the linear action `ρ_0⁽¹⁾`.
pub fn average_parametric<F>(
    family: F,
    grid: &[Vec<f64>],
    ctx: &AveragingContext,
) -> Result<(Vec<ParametricResult>, ContinuityReport)>
where
    F: Fn(&[f64]) -> Result<GroupActionSpec> + Sync + Send,
{
    require_homogeneous(ctx)?;
    let dim = grid.first().map_or(0, Vec::len);
    let base = family(&vec![0.0; dim])?.weighted_elements()?;
    let base_linear = base
        .iter()
        .enumerate()
        .map(|(i, (_, g))| precheck_element(i, g, ctx))
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::with_capacity(grid.len());
    for p in grid {
        let action = family(p)?;
        let elements = action.weighted_elements()?;
        if elements.len() != base.len() {
            return Err(Error::Precondition("group size changes with the parameter".into()));
        }
        let maps: Vec<NumericMap> = elements.iter().map(|(_, m)| m.clone()).collect();
        for (i, g) in maps.iter().enumerate() {
            precheck_element(i, g, ctx)?;
        }
        let idx: Vec<usize> = (0..maps.len()).collect();
        let fields = par::collect_results(par::map(&idx, |&i| -> Result<FieldSource> {
            let lmap = NumericMap::linear(base_linear[i].clone())?;
            let path = PathOfMaps::from_fn(ctx.samples, true, |t| {
                if t == 0.0 {
                    return Ok(NumericMap::identity(ctx.dim()));
                }
                let scaled: Vec<f64> = p.iter().map(|v| v * t).collect();
                let g = family(&scaled)?.weighted_elements()?.swap_remove(i).1;
                homothety_unchecked(&g.inverse(), t, ctx.tol)?.then(&lmap)
            })?;
            if path.maps().iter().all(is_linear) && linear_path_is_identity(&path, ctx) {
                return Ok(zero_field(ctx.dim()));
            }
            let check = check_path(&path, &ctx.probes, &ctx.moment)?;
            let worst = check.max_symplectic_residual.max(check.max_moment_residual);
            if worst > ctx.path.check_tol {
                return Err(Error::Rejected(format!(
                    "element {i} at parameter {p:?}: path sample {} fails the membership check ({worst:e})",
                    check.worst_sample
                )));
            }
            Ok(FieldSource::Sampled(Arc::new(build_field(&path, ctx.path.stencil_order))))
        }))?;
        let terms: Vec<(f64, FieldSource)> = elements
            .iter()
            .zip(fields)
            .filter(|(_, f)| !f.is_trivially_zero())
            .map(|((w, _), f)| (*w, f))
            .collect();
        let generator_field = if terms.is_empty() {
            zero_field(ctx.dim())
        } else {
            FieldSource::Sum(terms)
        };
        let phi_g = NumericMap::flow(generator_field.clone(), 1.0, ctx.tol);
        let residual_report = conjugation_report(&phi_g, &maps, &base_linear, ctx)?;
        results.push(ParametricResult {
            parameter: p.clone(),
            result: AveragingResult {
                phi_g,
                generator_field,
                residual_report,
            },
        });
    }
    let continuity = continuity_report(&results, ctx)?;
    Ok((results, continuity))
}

fn linear_path_is_identity(path: &PathOfMaps, ctx: &AveragingContext) -> bool {
    path.maps().iter().all(|m| {
        ctx.probes.iter().take(2).all(|z| {
            m.apply(z)
                .map(|w| max_abs_diff(&w, z) < 1e-14 * (1.0 + z.iter().map(|v| v.abs()).fold(0.0, f64::max)))
                .unwrap_or(false)
        })
    })
}

fn continuity_report(results: &[ParametricResult], ctx: &AveragingContext) -> Result<ContinuityReport> {
    let values = results
        .iter()
        .map(|r| {
            ctx.probes
                .iter()
                .map(|z| r.result.phi_g.apply(z))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut adjacent_differences = Vec::new();
    let mut max_difference_quotient = 0.0f64;
    for k in 1..results.len() {
        let d = values[k]
            .iter()
            .zip(&values[k - 1])
            .map(|(a, b)| max_abs_diff(a, b))
            .fold(0.0, f64::max);
        let dp = max_abs_diff(&results[k].parameter, &results[k - 1].parameter);
        adjacent_differences.push(d);
        if dp > 0.0 {
            max_difference_quotient = max_difference_quotient.max(d / dp);
        }
    }
    Ok(ContinuityReport {
        adjacent_differences,
        max_difference_quotient,
    })
}

/// `ψ = e^{−1/(xy)²}` for `x ≥ 0` and `2e^{−1/(xy)²}` for `x < 0`, on the
/// hyperbolic model `h = xy`. Its time-1 map does not commute with `−I`.
pub const FLAT_TWIST: &str = "piecewise(x1 >= 0, flat_exp(x1*y1), 2*flat_exp(x1*y1))";

/// Halton points of `[−1, 1]^dim` with `|z| ≥ 0.1` and every coordinate at
/// least `margin` away from 0 (keeps probes off the separatrices of `xy`).
pub fn averaging_probes(dim: usize, count: usize, margin: f64) -> Vec<Vec<f64>> {
    Region::cube(dim, 1.0).halton_filtered(count, |z| {
        z.iter().map(|v| v * v).sum::<f64>() >= 0.01 && z.iter().all(|v| v.abs() >= margin)
    })
}

/// The involution `ρ = σ ∘ (−I) ∘ σ⁻¹` with `σ` the time-1 map of
/// [`FLAT_TWIST`].
pub struct FlatInvolution {
    pub action: GroupActionSpec,
    pub ctx: AveragingContext,
    pub sigma: NumericMap,
    pub rho: NumericMap,
    pub involution: NumericMap,
}

pub fn flat_involution_example(probes: usize, tol: f64) -> Result<FlatInvolution> {
    let layout = Layout::fiber(1);
    let sigma = NumericMap::flow(FieldSource::parse(FLAT_TWIST, layout)?, 1.0, tol);
    let involution = NumericMap::linear(-DMatrix::identity(2, 2))?;
    let rho = sigma.inverse().then(&involution)?.then(&sigma)?;
    let mut ctx = AveragingContext::new(
        MomentMap::parse(&["x1*y1"], layout)?,
        averaging_probes(2, probes, 0.05),
    );
    ctx.tol = tol;
    let action = GroupActionSpec::Finite {
        elements: vec![NumericMap::identity(2), rho.clone()],
        table: Some(vec![vec![0, 1], vec![1, 0]]),
    };
    Ok(FlatInvolution {
        action,
        ctx,
        sigma,
        rho,
        involution,
    })
}

/// JSON input of the `average` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFile {
    pub layout: Layout,
    /// Moment-map components as expression strings.
    pub moment: Vec<String>,
    pub elements: Vec<MapSpec>,
    /// Multiplication table, `table[i][j]` = index of `g_i g_j`.
    #[serde(default)]
    pub table: Option<Vec<Vec<usize>>>,
    #[serde(default = "default_probe_count")]
    pub probes: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_probe_count() -> usize {
    12
}

fn default_margin() -> f64 {
    0.05
}

impl ActionFile {
    pub fn build(&self, tol: f64) -> Result<(GroupActionSpec, AveragingContext)> {
        let texts: Vec<&str> = self.moment.iter().map(|s| s.as_str()).collect();
        let moment = MomentMap::parse(&texts, self.layout)?;
        let elements = self
            .elements
            .iter()
            .map(|e| e.build(self.layout, tol))
            .collect::<Result<Vec<_>>>()?;
        let mut ctx = AveragingContext::new(moment, averaging_probes(self.layout.dim(), self.probes, self.margin));
        ctx.tol = tol;
        Ok((
            GroupActionSpec::Finite {
                elements,
                table: self.table.clone(),
            },
            ctx,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyperbolic_ctx(probes: usize) -> AveragingContext {
        let moment = MomentMap::parse(&["x1*y1"], Layout::fiber(1)).unwrap();
        let pts = Region::uniform(2, 0.2, 0.9).halton(probes);
        AveragingContext::new(moment, pts)
    }

    #[test]
    fn linear_part_of_linear_map() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let map = NumericMap::linear(m.clone()).unwrap();
        assert!((linear_part(&map, 1e-12).unwrap() - m).amax() < 1e-15);
    }

    #[test]
    fn linear_part_requires_fixed_origin() {
        let map = NumericMap::affine(DMatrix::identity(2, 2), vec![0.1, 0.0]).unwrap();
        assert!(matches!(linear_part(&map, 1e-9), Err(Error::Precondition(_))));
    }

    #[test]
    fn flat_flow_has_identity_linear_part() {
        let f = FieldSource::parse(
            "piecewise(x1 >= 0, flat_exp(x1*y1), 2*flat_exp(x1*y1))",
            Layout::fiber(1),
        )
        .unwrap();
        let l = linear_part(&NumericMap::flow(f, 1.0, 1e-12), 1e-12).unwrap();
        assert_eq!(l, DMatrix::identity(2, 2));
    }

    #[test]
    fn homothety_endpoints() {
        let ctx = hyperbolic_ctx(4);
        let f = FieldSource::parse("(x1*y1)^3", Layout::fiber(1)).unwrap();
        let g = NumericMap::flow(f, 1.0, 1e-12);
        let z = [0.6, 0.7];
        let s1 = homothety_path(&g, 1.0, &ctx).unwrap();
        assert_eq!(s1.apply(&z).unwrap(), g.apply(&z).unwrap());
        let s0 = homothety_path(&g, 0.0, &ctx).unwrap();
        assert!(max_abs_diff(&s0.apply(&z).unwrap(), &z) < 1e-12);
        let lin = NumericMap::linear(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        let sl = homothety_path(&lin, 0.3, &ctx).unwrap();
        assert_eq!(sl.apply(&z).unwrap(), lin.apply(&z).unwrap());
    }

    #[test]
    fn homothety_needs_homogeneous_moment() {
        let moment = MomentMap::parse(&["x1*y1 + x1^3"], Layout::fiber(1)).unwrap();
        let ctx = AveragingContext::new(moment, Region::uniform(2, 0.2, 0.9).halton(4));
        let g = NumericMap::identity(2);
        assert!(matches!(homothety_path(&g, 0.5, &ctx), Err(Error::UnsupportedPath(_))));
    }

    #[test]
    fn generator_of_identity_is_zero() {
        let ctx = hyperbolic_ctx(4);
        let f = generator_for(&NumericMap::identity(2), &ctx).unwrap();
        assert!(f.is_trivially_zero());
    }

    #[test]
    fn linear_action_gives_identity_conjugator() {
        let mut ctx = hyperbolic_ctx(6);
        ctx.jacobian_probes = 1;
        let minus = NumericMap::linear(-DMatrix::<f64>::identity(2, 2)).unwrap();
        let action = GroupActionSpec::finite(vec![NumericMap::identity(2), minus]);
        let r = average(&action, &ctx).unwrap();
        assert!(r.generator_field.is_trivially_zero());
        assert!(r.residual_report.passed, "{:?}", r.residual_report);
        assert!(r.residual_report.max_residual < 1e-15);
    }

    #[test]
    fn closure_failure_is_rejected() {
        let ctx = hyperbolic_ctx(4);
        let d = NumericMap::linear(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        let action = GroupActionSpec::finite(vec![NumericMap::identity(2), d]);
        assert!(matches!(average(&action, &ctx), Err(Error::Rejected(_))));
    }
}
