//! A smooth integrable Hamiltonian that is nonresonant at the origin but
//! has hyperbolic periodic orbits arbitrarily close to it, in two degrees
//! of freedom.
//!
//! `H1 = Q(I₁, I₂)` with `I_i = x_i² + y_i²`, where `Q` is linear with slope
//! `γ` at the origin and linear with rational slope `γᵏ` on small balls
//! `U_k`. On each preimage `V_k` the flow of `H1` is periodic, and `H2` adds
//! a cut-off pendulum term there. The added term commutes with
//! `F_k = b I₁ + a I₂`, where `a γᵏ₁ = b γᵏ₂`, so `H2` stays integrable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{CmpOp, Dual, Expr, HamiltonianExpr, Layout, Var};
use crate::flows::integrator::{integrate, integrate_observed, single_step, Control, IntegratorOptions};
use crate::flows::{FieldSource, Region};
use crate::linalg;
use crate::par;
use crate::symplectic_linear::QuadraticHamiltonian;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonresonanceReport {
    pub nonresonant: bool,
    pub bound: i64,
    pub threshold: f64,
    /// Nonzero `k` with the smallest `|⟨k, γ⟩|` (ties: smaller `max|k_i|`).
    pub worst: Vec<i64>,
    pub worst_value: f64,
}

/// Exhaustive search over nonzero `k ∈ [−N, N]ⁿ`, up to sign.
pub fn check_nonresonance(gamma: &[f64], bound: i64, threshold: f64) -> Result<NonresonanceReport> {
    if bound < 1 || gamma.is_empty() {
        return Err(Error::Precondition("need N >= 1 and a nonempty frequency vector".into()));
    }
    let n = gamma.len();
    let side = (2 * bound + 1) as u64;
    let total = side.checked_pow(n as u32).ok_or_else(|| {
        Error::Precondition("search space too large".into())
    })?;
    let mut best: Option<(f64, i64, Vec<i64>)> = None;
    let mut k = vec![0i64; n];
    for idx in 0..total {
        let mut r = idx;
        for slot in k.iter_mut() {
            *slot = (r % side) as i64 - bound;
            r /= side;
        }
        // one representative of ±k: first nonzero entry positive
        match k.iter().find(|v| **v != 0) {
            Some(v) if *v > 0 => {}
            _ => continue,
        }
        let val = k.iter().zip(gamma).map(|(a, g)| *a as f64 * g).sum::<f64>().abs();
        let norm = k.iter().map(|v| v.abs()).max().unwrap_or(0);
        let better = match &best {
            None => true,
            Some((bv, bn, bk)) => val < *bv || (val == *bv && (norm < *bn || (norm == *bn && k < *bk))),
        };
        if better {
            best = Some((val, norm, k.clone()));
        }
    }
    let (worst_value, _, worst) = best.expect("search space has nonzero vectors");
    Ok(NonresonanceReport {
        nonresonant: worst_value >= threshold,
        bound,
        threshold,
        worst,
        worst_value,
    })
}

/// Frequency vector with the bound up to which it was certified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub gamma: Vec<f64>,
    pub certified_nonresonant_up_to: i64,
    pub threshold: f64,
}

impl FrequencyVector {
    pub fn certify(gamma: Vec<f64>, bound: i64, threshold: f64) -> Result<FrequencyVector> {
        if gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Precondition("frequencies must be positive".into()));
        }
        let rep = check_nonresonance(&gamma, bound, threshold)?;
        if !rep.nonresonant {
            return Err(Error::Construction(format!(
                "resonance {:?} with |<k, gamma>| = {:e}",
                rep.worst, rep.worst_value
            )));
        }
        Ok(FrequencyVector {
            gamma,
            certified_nonresonant_up_to: bound,
            threshold,
        })
    }
}

/// Rational number `num/den`, `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// First `count` continued-fraction convergents of `x` (repeating the last
/// one if the expansion terminates).
pub fn convergents(x: f64, count: usize) -> Vec<Rational> {
    let mut out = Vec::with_capacity(count);
    let (mut h0, mut h1) = (1i64, x.floor() as i64);
    let (mut k0, mut k1) = (0i64, 1i64);
    let mut frac = x - x.floor();
    out.push(Rational { num: h1, den: k1 });
    while out.len() < count {
        if frac.abs() < 1e-12 {
            out.push(*out.last().unwrap());
            continue;
        }
        let inv = 1.0 / frac;
        let a = inv.floor() as i64;
        frac = inv - inv.floor();
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        out.push(Rational { num: h1, den: k1 });
    }
    out
}

/// Centers, radii and rational slopes of the plateau balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSpec {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub slopes: Vec<Vec<Rational>>,
}

impl PlateauSpec {
    /// `c_k = (0.5/k)(1, …, 1)`, `r_k = 0.02/k³`, and `γᵏ_i` the `k`-th
    /// continued-fraction convergent of `γ_i`.
    pub fn desk(gamma: &[f64], count: usize) -> PlateauSpec {
        let n = gamma.len();
        let conv: Vec<Vec<Rational>> = gamma.iter().map(|g| convergents(*g, count)).collect();
        PlateauSpec {
            centers: (1..=count).map(|k| vec![0.5 / k as f64; n]).collect(),
            radii: (1..=count).map(|k| 0.02 / (k as f64).powi(3)).collect(),
            slopes: (0..count).map(|k| (0..n).map(|i| conv[i][k]).collect()).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.radii.len()
    }

    pub fn slope_values(&self, k: usize) -> Vec<f64> {
        self.slopes[k].iter().map(|r| r.value()).collect()
    }

    /// Disjoint balls inside the open orthant with shrinking radii and
    /// centers, and slopes approaching `γ`.
    pub fn validate(&self, gamma: &[f64]) -> Result<()> {
        let n = gamma.len();
        let kk = self.count();
        if self.centers.len() != kk || self.slopes.len() != kk {
            return Err(Error::Construction("plateau lists have different lengths".into()));
        }
        for k in 0..kk {
            if self.centers[k].len() != n || self.slopes[k].len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: self.centers[k].len(),
                });
            }
            if self.slopes[k].iter().any(|r| r.den <= 0) {
                return Err(Error::Construction("slope denominators must be positive".into()));
            }
            if !(self.radii[k] > 0.0) || self.centers[k].iter().any(|c| *c - self.radii[k] <= 0.0) {
                return Err(Error::Construction(format!("ball {k} is not inside the positive orthant")));
            }
            for j in 0..k {
                let d = dist(&self.centers[k], &self.centers[j]);
                if d <= self.radii[k] + self.radii[j] {
                    return Err(Error::Construction(format!("balls {j} and {k} overlap")));
                }
                if !(self.radii[k] < self.radii[j]) || !(norm(&self.centers[k]) < norm(&self.centers[j])) {
                    return Err(Error::Construction("balls must shrink toward the origin".into()));
                }
                let dev = |i: usize| max_dev(&self.slope_values(i), gamma);
                if dev(k) > dev(j) {
                    return Err(Error::Construction("slopes must approach gamma".into()));
                }
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// `f(u) = e^{−1/u²}` for `u > 0`, else 0.
fn one_sided_flat(u: Expr) -> Expr {
    Expr::piecewise(u.clone(), CmpOp::Gt, Expr::c(0.0), Expr::flat(u, 0), Expr::c(0.0))
}

/// `|I − c|² / r²` in terms of the given `I` expressions.
fn normalized_sq_distance(i_vars: &[Expr], center: &[f64], radius: f64) -> Expr {
    let s = Expr::sum(
        i_vars
            .iter()
            .zip(center)
            .map(|(iv, c)| Expr::powi(Expr::sub(iv.clone(), Expr::c(*c)), 2)),
    );
    Expr::mul(s, Expr::c(1.0 / (radius * radius)))
}

fn gate_numerator(sigma: &Expr) -> Expr {
    one_sided_flat(Expr::sub(Expr::c(1.0), sigma.clone()))
}

/// Bump equal to 1 for `σ ≤ 1/4` and 0 for `σ ≥ 1`, as `A/(A + B)`.
fn bump(sigma: &Expr) -> Expr {
    let a = gate_numerator(sigma);
    let b = one_sided_flat(Expr::sub(sigma.clone(), Expr::c(0.25)));
    Expr::div(a.clone(), Expr::add(a, b))
}

/// `Q` as an expression in placeholder variables `x_i` standing for `I_i`.
#[derive(Debug, Clone)]
pub struct PlateauQ {
    pub gamma: Vec<f64>,
    pub spec: PlateauSpec,
    /// Offsets `d_k = −(γᵏ − γ)·c_k`.
    pub offsets: Vec<f64>,
    pub q: HamiltonianExpr,
}

impl PlateauQ {
    pub fn eval(&self, i: &[f64]) -> f64 {
        self.q.eval(&self.embed(i))
    }

    pub fn gradient(&self, i: &[f64]) -> Vec<f64> {
        let g = self.q.gradient_forward(&self.embed(i));
        g.iter().step_by(2).copied().collect()
    }

    fn embed(&self, i: &[f64]) -> Vec<f64> {
        i.iter().flat_map(|v| [*v, 0.0]).collect()
    }

    /// `Q(x₁² + y₁², …)`.
    pub fn h1(&self) -> Result<HamiltonianExpr> {
        let n = self.gamma.len();
        let e = self.q.expr().substitute(&|v: Var| match v.kind {
            crate::expr::VarKind::X => Some(action_expr(v.index)),
            _ => None,
        });
        HamiltonianExpr::new(e, Layout::fiber(n))
    }
}

fn action_expr(i: u32) -> Expr {
    Expr::add(Expr::powi(Expr::var(Var::x(i)), 2), Expr::powi(Expr::var(Var::y(i)), 2))
}

/// `Q(I) = γ·I + Σ_k χ_k(I)((γᵏ − γ)·I + d_k)`. On the half-radius ball
/// around `c_k` it is linear with slope `γᵏ` and agrees with `γ·I` at `c_k`.
pub fn build_plateau_q(spec: &PlateauSpec, gamma: &[f64]) -> Result<PlateauQ> {
    spec.validate(gamma)?;
    let n = gamma.len();
    let vars: Vec<Expr> = (1..=n as u32).map(|i| Expr::var(Var::x(i))).collect();
    let linear = |coef: &[f64]| {
        Expr::sum(
            vars.iter()
                .zip(coef)
                .map(|(v, c)| Expr::mul(Expr::c(*c), v.clone())),
        )
    };
    let mut q = linear(gamma);
    let mut offsets = Vec::with_capacity(spec.count());
    for k in 0..spec.count() {
        let delta: Vec<f64> = spec.slope_values(k).iter().zip(gamma).map(|(a, g)| a - g).collect();
        let d_k = -delta.iter().zip(&spec.centers[k]).map(|(a, c)| a * c).sum::<f64>();
        offsets.push(d_k);
        let sigma = normalized_sq_distance(&vars, &spec.centers[k], spec.radii[k]);
        let plateau = Expr::add(linear(&delta), Expr::c(d_k));
        q = Expr::add(q, Expr::mul(bump(&sigma), plateau));
    }
    Ok(PlateauQ {
        gamma: gamma.to_vec(),
        spec: spec.clone(),
        offsets,
        q: HamiltonianExpr::new(q, Layout::fiber(n))?,
    })
}

/// Data of one modified region.
#[derive(Debug, Clone)]
pub struct RegionData {
    pub index: usize,
    pub epsilon: f64,
    /// `(a, b)` with `a γᵏ₁ = b γᵏ₂`.
    pub resonance: (u32, u32),
    /// `Re(z₁ᵃ z̄₂ᵇ)`, `z_j = x_j + i y_j`.
    pub resonant_term: HamiltonianExpr,
    /// `b I₁ + a I₂`, commuting with `H2`.
    pub witness: HamiltonianExpr,
    /// `σ_k`: squared distance of `(I₁, I₂)` to `c_k` over `r_k²`.
    pub sigma: Expr,
}

#[derive(Debug, Clone)]
pub struct PerturbedSystem {
    pub gamma: Vec<f64>,
    pub spec: PlateauSpec,
    pub kappa: f64,
    pub h1: HamiltonianExpr,
    pub h2: HamiltonianExpr,
    pub regions: Vec<RegionData>,
}

/// Smallest positive `(a, b)` with `a·s₁ = b·s₂`; `None` if `a + b` would
/// exceed `max_order`.
pub fn resonance_integers(s1: Rational, s2: Rational, max_order: u32) -> Option<(u32, u32)> {
    // a s1 = b s2  ⇔  a / b = s2 / s1 = (s2.num s1.den) / (s2.den s1.num)
    let num = s2.num * s1.den;
    let den = s2.den * s1.num;
    if num <= 0 || den <= 0 {
        return None;
    }
    let g = gcd(num, den);
    let (a, b) = (num / g, den / g);
    if a + b > max_order as i64 {
        None
    } else {
        Some((a as u32, b as u32))
    }
}

/// Real and imaginary parts of `z₁ᵃ z̄₂ᵇ`.
fn resonant_monomial(a: u32, b: u32) -> (Expr, Expr) {
    let mul = |(ar, ai): (Expr, Expr), (br, bi): (Expr, Expr)| {
        (
            Expr::sub(Expr::mul(ar.clone(), br.clone()), Expr::mul(ai.clone(), bi.clone())),
            Expr::add(Expr::mul(ar, bi), Expr::mul(ai, br)),
        )
    };
    let z1 = (Expr::var(Var::x(1)), Expr::var(Var::y(1)));
    let z2c = (Expr::var(Var::x(2)), Expr::neg(Expr::var(Var::y(2))));
    let mut acc = (Expr::c(1.0), Expr::c(0.0));
    for _ in 0..a {
        acc = mul(acc, z1.clone());
    }
    for _ in 0..b {
        acc = mul(acc, z2c.clone());
    }
    acc
}

/// Largest resonance order accepted by [`build_h2`].
pub const MAX_RESONANCE_ORDER: u32 = 12;

/// `H2 = H1 + Σ_k ε_k χ_k(I)(Re(z₁ᵃ z̄₂ᵇ) + κ(I₁ − I₂ − Δc_k)²/2)`.
///
/// The twist term is a function of `I` only, so it keeps `F_k` a first
/// integral; it turns the reduced resonant dynamics into a pendulum with a
/// saddle (without it the plateau system is linear and elliptic).
pub fn build_h2(q: &PlateauQ, epsilons: &[f64], kappa: f64) -> Result<PerturbedSystem> {
    if q.gamma.len() != 2 {
        return Err(Error::Construction("the perturbation is built for two degrees of freedom".into()));
    }
    if epsilons.len() != q.spec.count() {
        return Err(Error::Dimension {
            expected: q.spec.count(),
            found: epsilons.len(),
        });
    }
    let layout = Layout::fiber(2);
    let h1 = q.h1()?;
    let i_exprs = [action_expr(1), action_expr(2)];
    let mut h2 = h1.expr().clone();
    let mut regions = Vec::with_capacity(epsilons.len());
    for (k, eps) in epsilons.iter().enumerate() {
        let s = &q.spec.slopes[k];
        let (a, b) = resonance_integers(s[0], s[1], MAX_RESONANCE_ORDER).ok_or_else(|| {
            Error::Construction(format!(
                "no resonance of order <= {MAX_RESONANCE_ORDER} for slope {:?} in region {k}",
                s
            ))
        })?;
        let (w, _) = resonant_monomial(a, b);
        let c = &q.spec.centers[k];
        let sigma = normalized_sq_distance(&i_exprs, c, q.spec.radii[k]);
        let j = Expr::sub(Expr::sub(i_exprs[0].clone(), i_exprs[1].clone()), Expr::c(c[0] - c[1]));
        let body = Expr::add(w.clone(), Expr::mul(Expr::c(0.5 * kappa), Expr::powi(j, 2)));
        let term = Expr::mul(bump(&sigma), Expr::mul(Expr::c(*eps), body));
        h2 = Expr::add(h2, term);
        let witness = Expr::add(
            Expr::mul(Expr::c(b as f64), i_exprs[0].clone()),
            Expr::mul(Expr::c(a as f64), i_exprs[1].clone()),
        );
        regions.push(RegionData {
            index: k,
            epsilon: *eps,
            resonance: (a, b),
            resonant_term: HamiltonianExpr::new(w, layout)?,
            witness: HamiltonianExpr::new(witness, layout)?,
            sigma,
        });
    }
    Ok(PerturbedSystem {
        gamma: q.gamma.clone(),
        spec: q.spec.clone(),
        kappa,
        h1,
        h2: HamiltonianExpr::new(h2, layout)?,
        regions,
    })
}

/// Desk-scale instance: `K` plateaus from [`PlateauSpec::desk`], all with
/// amplitude `epsilon`, twist `κ = 20`.
pub fn desk_system(gamma: &[f64], count: usize, epsilon: f64) -> Result<PerturbedSystem> {
    let spec = PlateauSpec::desk(gamma, count);
    let q = build_plateau_q(&spec, gamma)?;
    build_h2(&q, &vec![epsilon; count], DESK_KAPPA)
}

pub const DESK_KAPPA: f64 = 20.0;

impl PerturbedSystem {
    /// `σ_k` at a phase-space point.
    pub fn sigma_at(&self, k: usize, z: &[f64]) -> f64 {
        let i = actions(z);
        let c = &self.spec.centers[k];
        let r = self.spec.radii[k];
        i.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (r * r)
    }

    pub fn in_regions(&self, z: &[f64]) -> bool {
        (0..self.spec.count()).any(|k| self.sigma_at(k, z) < 1.0)
    }
}

fn actions(z: &[f64]) -> Vec<f64> {
    z.chunks(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect()
}

/// Phase-space points over `I ∈` the ball of radius `frac·r_k` around
/// `c_k`, with Halton angles.
pub fn region_probes(sys: &PerturbedSystem, k: usize, frac: f64, count: usize) -> Vec<Vec<f64>> {
    let c = &sys.spec.centers[k];
    let r = frac * sys.spec.radii[k];
    let unit = Region::uniform(4, 0.0, 1.0);
    unit.halton_filtered(count, |u| {
        let d = ((2.0 * u[0] - 1.0).powi(2) + (2.0 * u[1] - 1.0).powi(2)).sqrt();
        d < 1.0
    })
    .into_iter()
    .map(|u| {
        let i1 = c[0] + r * (2.0 * u[0] - 1.0);
        let i2 = c[1] + r * (2.0 * u[1] - 1.0);
        let (t1, t2) = (2.0 * std::f64::consts::PI * u[2], 2.0 * std::f64::consts::PI * u[3]);
        vec![i1.sqrt() * t1.cos(), i1.sqrt() * t1.sin(), i2.sqrt() * t2.cos(), i2.sqrt() * t2.sin()]
    })
    .collect()
}

/// Result of the support checks of `H2 − H1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    /// `max |H2 − H1|` over the probes outside every `V_k`.
    pub sampled_max: f64,
    pub sampled_points: usize,
    /// Every added term of `H2` has the gate `f(1 − σ_k)` as numerator of
    /// its cut-off factor, so it vanishes for `σ_k ≥ 1`.
    pub ast_supported: bool,
    pub terms: usize,
}

/// Peels `H2 = (…(H1 + t₁) + …) + t_K` and inspects each term.
pub fn support_check(sys: &PerturbedSystem, probes: &[Vec<f64>]) -> SupportReport {
    let mut terms = Vec::new();
    let mut cur = sys.h2.expr();
    let mut ast_supported = true;
    while cur != sys.h1.expr() {
        match cur {
            Expr::Add(rest, t) => {
                terms.push(t.as_ref());
                cur = rest;
            }
            _ => {
                ast_supported = false;
                break;
            }
        }
    }
    let gates: Vec<Expr> = sys.regions.iter().map(|r| gate_numerator(&r.sigma)).collect();
    for t in &terms {
        let ok = match t {
            Expr::Mul(cut, _) => match cut.as_ref() {
                Expr::Div(num, _) => gates.iter().any(|g| g == num.as_ref()),
                _ => false,
            },
            _ => false,
        };
        ast_supported &= ok;
    }
    let outside: Vec<&Vec<f64>> = probes.iter().filter(|z| !sys.in_regions(z)).collect();
    let sampled_max = outside
        .iter()
        .map(|z| (sys.h2.eval(z.as_slice()) - sys.h1.eval(z.as_slice())).abs())
        .fold(0.0, f64::max);
    SupportReport {
        sampled_max,
        sampled_points: outside.len(),
        ast_supported,
        terms: terms.len(),
    }
}

/// `max |A − A_expected|` for the quadratic part of `H2` at 0 against
/// `Σ γ_i (x_i² + y_i²)`.
pub fn quadratic_part_residual(sys: &PerturbedSystem) -> Result<f64> {
    let qp = QuadraticHamiltonian::quadratic_part(&sys.h2)?;
    let d = 2 * sys.gamma.len();
    let want = DMatrix::from_fn(d, d, |r, c| if r == c { sys.gamma[r / 2] } else { 0.0 });
    Ok((qp.matrix() - want).amax())
}

/// `max |{h, w}|` over the probes.
pub fn bracket_residual(h: &HamiltonianExpr, w: &HamiltonianExpr, probes: &[Vec<f64>]) -> f64 {
    let j = crate::linalg::j_matrix(h.layout().dof());
    probes
        .iter()
        .map(|z| {
            let (gh, gw) = (h.gradient_forward(z), w.gradient_forward(z));
            let mut s = 0.0;
            for r in 0..gh.len() {
                for c in 0..gw.len() {
                    s += gh[r] * j[(r, c)] * gw[c];
                }
            }
            s.abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub region: usize,
    pub max_residual: f64,
    pub probes: usize,
    pub passed: bool,
}

/// `max |{H2, F_k}|` over probes filling `V_k`.
pub fn verify_integrability_witness(sys: &PerturbedSystem, k: usize, probes: usize, tol: f64) -> Result<WitnessReport> {
    let region = sys
        .regions
        .get(k)
        .ok_or_else(|| Error::Precondition(format!("no region {k}")))?;
    let pts = region_probes(sys, k, 0.999, probes);
    let max_residual = bracket_residual(&sys.h2, &region.witness, &pts);
    Ok(WitnessReport {
        region: k,
        max_residual,
        probes: pts.len(),
        passed: max_residual < tol,
    })
}

/// Derivative sizes of `H2 − H1` on `V_k`: max of the value, the gradient
/// and finite-difference second and third derivatives along coordinate
/// axes. Reported only; no bound is certified.
pub fn smallness_report(sys: &PerturbedSystem, k: usize, probes: usize) -> Result<[f64; 4]> {
    let diff = sys.h2.add(&sys.h1.scale(-1.0))?;
    let pts = region_probes(sys, k, 1.0, probes);
    let h = 1e-4 * sys.spec.radii[k].sqrt();
    let mut out = [0.0f64; 4];
    for z in &pts {
        out[0] = out[0].max(diff.eval(z.as_slice()).abs());
        let g = diff.gradient_forward(z);
        out[1] = out[1].max(g.iter().map(|v| v.abs()).fold(0.0, f64::max));
        for axis in 0..z.len() {
            let shifted = |s: f64| {
                let mut w = z.clone();
                w[axis] += s;
                diff.gradient_forward(&w)[axis]
            };
            let (gm, g0, gp) = (shifted(-h), g[axis], shifted(h));
            out[2] = out[2].max(((gp - gm) / (2.0 * h)).abs());
            out[3] = out[3].max(((gp - 2.0 * g0 + gm) / (h * h)).abs());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetOptions {
    pub tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// A multiplier counts as hyperbolic when `|λ| > 1 + hyperbolic_margin`.
    pub hyperbolic_margin: f64,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        FloquetOptions {
            tol: 1e-12,
            newton_tol: 1e-10,
            max_newton: 30,
            hyperbolic_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloquetReport {
    pub region: usize,
    pub orbit_point: Vec<f64>,
    pub period: f64,
    pub closure_residual: f64,
    pub newton_iterations: usize,
    /// `(re, im)` of the monodromy eigenvalues, by decreasing modulus.
    pub multipliers: Vec<[f64; 2]>,
    pub max_modulus: f64,
    /// `|Π λ − 1|`.
    pub product_residual: f64,
    pub hyperbolic: bool,
}

struct Return {
    point: Vec<f64>,
    time: f64,
    /// Jacobian of the return map at the start point (4×4, before
    /// restricting to the section).
    jacobian: DMatrix<f64>,
}

/// First downward crossing of `y₁ = 0` after leaving the start point.
fn first_return(field: &FieldSource, z0: &[f64], tol: f64, with_jacobian: bool) -> Result<Return> {
    let opts = IntegratorOptions {
        tol,
        max_step: 0.05,
        ..IntegratorOptions::default()
    };
    let mut hit: Option<(f64, Vec<f64>, f64)> = None;
    let mut rhs = field.rhs::<f64>();
    integrate_observed(&mut rhs, z0, 1e3, &opts, |tp, yp, t, y| {
        if yp[1] > 0.0 && y[1] <= 0.0 {
            hit = Some((tp, yp.to_vec(), t - tp));
            return Control::Stop;
        }
        Control::Continue
    })?;
    let (tp, yp, hmax) = hit.ok_or_else(|| Error::NotFound("no return to the section".into()))?;
    let (mut lo, mut hi) = (0.0, hmax);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if single_step(&mut rhs, &yp, mid)[1] > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let time = tp + hi;
    let point = single_step(&mut rhs, &yp, hi);
    let jacobian = if with_jacobian {
        flow_jacobian(field, z0, time, tol)?
    } else {
        DMatrix::zeros(0, 0)
    };
    Ok(Return { point, time, jacobian })
}

/// `Dφ_t(z)` by forward-mode passes.
fn flow_jacobian(field: &FieldSource, z: &[f64], t: f64, tol: f64) -> Result<DMatrix<f64>> {
    let d = z.len();
    let opts = IntegratorOptions {
        tol,
        max_step: 0.05,
        ..IntegratorOptions::default()
    };
    let cols = par::collect_results(par::map_range(d, |c| {
        let seed: Vec<Dual> = z
            .iter()
            .enumerate()
            .map(|(i, v)| Dual {
                re: *v,
                du: if i == c { 1.0 } else { 0.0 },
            })
            .collect();
        integrate(field.rhs::<Dual>(), &seed, t, &opts).map(|out| out.iter().map(|v| v.du).collect::<Vec<f64>>())
    }))?;
    Ok(DMatrix::from_fn(d, d, |r, c| cols[c][r]))
}

/// Periodic orbit through the section `y₁ = 0` near the center of `U_k`,
/// by Newton on `(x₂, y₂)` with `x₁` fixed, followed by the monodromy
/// spectrum.
pub fn detect_hyperbolic_orbit(sys: &PerturbedSystem, k: usize, opts: &FloquetOptions) -> Result<FloquetReport> {
    let region = sys
        .regions
        .get(k)
        .ok_or_else(|| Error::Precondition(format!("no region {k}")))?;
    let field = FieldSource::Hamiltonian(sys.h2.clone());
    let c = &sys.spec.centers[k];
    let mut z = vec![c[0].sqrt(), 0.0, c[1].sqrt(), 0.0];
    let mut iterations = 0;
    let mut residual;
    loop {
        let ret = first_return(&field, &z, opts.tol, true)?;
        let g = [ret.point[2] - z[2], ret.point[3] - z[3]];
        residual = g[0].hypot(g[1]);
        if residual < opts.newton_tol {
            break;
        }
        if iterations >= opts.max_newton {
            return Err(Error::NotFound(format!(
                "Newton did not converge in region {k} after {iterations} steps (residual {residual:e}, seed I = {c:?}, epsilon {})",
                region.epsilon
            )));
        }
        // derivative of the section-restricted return map
        let mut v = vec![0.0; 4];
        field.eval_into(&ret.point, &mut v);
        if v[1].abs() < 1e-14 {
            return Err(Error::NotFound("flow tangent to the section".into()));
        }
        let mut dp = ret.jacobian.clone();
        for col in 0..4 {
            let dy1 = dp[(1, col)];
            for row in 0..4 {
                dp[(row, col)] -= v[row] * dy1 / v[1];
            }
        }
        let a = DMatrix::from_row_slice(2, 2, &[dp[(2, 2)] - 1.0, dp[(2, 3)], dp[(3, 2)], dp[(3, 3)] - 1.0]);
        let step = a
            .lu()
            .solve(&nalgebra::DVector::from_row_slice(&g))
            .ok_or_else(|| Error::NotFound(format!("singular Newton matrix in region {k}")))?;
        z[2] -= step[0];
        z[3] -= step[1];
        iterations += 1;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NotFound(format!("Newton diverged in region {k}")));
        }
    }
    let ret = first_return(&field, &z, opts.tol, false)?;
    let period = ret.time;
    let closure_residual = ret
        .point
        .iter()
        .zip(&z)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let m = flow_jacobian(&field, &z, period, opts.tol)?;
    let det = m.determinant();
    let mut ev: Vec<[f64; 2]> = linalg::eigenvalues(&m)?.iter().map(|l| [l.re, l.im]).collect();
    ev.sort_by(|a, b| b[0].hypot(b[1]).total_cmp(&a[0].hypot(a[1])).then(b[0].total_cmp(&a[0])));
    let max_modulus = ev.first().map_or(0.0, |l| l[0].hypot(l[1]));
    let hyperbolic = ev
        .iter()
        .any(|l| l[1].abs() <= 1e-9 * (1.0 + l[0].abs()) && l[0].abs() > 1.0 + opts.hyperbolic_margin);
    Ok(FloquetReport {
        region: k,
        orbit_point: z,
        period,
        closure_residual,
        newton_iterations: iterations,
        multipliers: ev,
        max_modulus,
        product_residual: (det - 1.0).abs(),
        hyperbolic,
    })
}

/// Section points `(x₂, y₂)` of orbits started on `y₁ = 0` around the
/// center of `U_k`, for plotting.
pub fn section_scatter(sys: &PerturbedSystem, k: usize, seeds: usize, crossings: usize, tol: f64) -> Result<Vec<[f64; 4]>> {
    let field = FieldSource::Hamiltonian(sys.h2.clone());
    let c = &sys.spec.centers[k];
    let r = 0.25 * sys.spec.radii[k];
    let starts: Vec<Vec<f64>> = (0..seeds)
        .map(|s| {
            let th = 2.0 * std::f64::consts::PI * s as f64 / seeds.max(1) as f64;
            let i2 = c[1] + r * th.cos();
            let phase = 0.5 * th.sin();
            vec![c[0].sqrt(), 0.0, i2.sqrt() * phase.cos(), i2.sqrt() * phase.sin()]
        })
        .collect();
    let rows = par::collect_results(par::map(&starts, |z0| -> Result<Vec<[f64; 4]>> {
        let mut out = Vec::with_capacity(crossings);
        let mut z = z0.clone();
        for _ in 0..crossings {
            let ret = first_return(&field, &z, tol, false)?;
            z = ret.point;
            out.push([z[0], z[1], z[2], z[3]]);
        }
        Ok(out)
    }))?;
    Ok(rows.into_iter().flatten().collect())
}
