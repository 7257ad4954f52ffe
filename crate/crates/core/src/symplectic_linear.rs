//! Quadratic Hamiltonians on `R^{2n}`: Poisson brackets, the Cartan
//! (nondegeneracy) test, Williamson classification and normalizing bases.
//!
//! Coordinates are interleaved, `z = (x1, y1, ..., xn, yn)`. The global
//! sign convention is
//!
//! * `ω = Σ dx_i ∧ dy_i`,
//! * `ẋ_i = ∂H/∂y_i`, `ẏ_i = -∂H/∂x_i`, i.e. `X_H = J ∇H` with `J` block
//!   diagonal `[[0, 1], [-1, 0]]`,
//! * `{f, g} = Σ (f_{x_i} g_{y_i} - f_{y_i} g_{x_i}) = ∇fᵀ J ∇g`.
//!
//! For `q_A(z) = zᵀAz` this gives `lin(q_A) = 2JA` and
//! `{q_A, q_B} = q_C` with `C = 2(AJB - BJA)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, HamiltonianExpr, Layout};
use crate::linalg;

pub const CONVENTION: &str =
    "omega = sum dx_i^dy_i; xdot = dH/dy, ydot = -dH/dx; {f,g} = sum f_x g_y - f_y g_x";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymplecticSpace {
    pub n: usize,
}

impl SymplecticSpace {
    pub fn new(n: usize) -> Result<SymplecticSpace> {
        if n == 0 {
            return Err(Error::Dimension { expected: 1, found: 0 });
        }
        Ok(SymplecticSpace { n })
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn j(&self) -> DMatrix<f64> {
        linalg::j_matrix(self.n)
    }

    pub fn convention(&self) -> &'static str {
        CONVENTION
    }
}

/// `q_A(z) = zᵀAz` with `A` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticHamiltonian {
    space: SymplecticSpace,
    a: DMatrix<f64>,
}

impl QuadraticHamiltonian {
    /// Accepts `a` if it is symmetric up to rounding and stores its exact
    /// symmetrization.
    pub fn new(space: SymplecticSpace, a: DMatrix<f64>) -> Result<QuadraticHamiltonian> {
        let d = space.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                found: a.nrows().max(a.ncols()),
            });
        }
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 * (1.0 + a.amax()) {
            return Err(Error::Precondition(format!(
                "coefficient matrix is not symmetric (defect {asym:e})"
            )));
        }
        let a = (&a + a.transpose()) * 0.5;
        Ok(QuadraticHamiltonian { space, a })
    }

    pub fn zero(space: SymplecticSpace) -> QuadraticHamiltonian {
        let d = space.dim();
        QuadraticHamiltonian {
            space,
            a: DMatrix::zeros(d, d),
        }
    }

    /// Quadratic given by its nonzero monomials `(i, k, c)` meaning
    /// `c·z_i·z_k` (0-based slots).
    pub fn from_monomials(n: usize, terms: &[(usize, usize, f64)]) -> QuadraticHamiltonian {
        let space = SymplecticSpace { n };
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for &(i, k, c) in terms {
            if i == k {
                a[(i, i)] += c;
            } else {
                a[(i, k)] += 0.5 * c;
                a[(k, i)] += 0.5 * c;
            }
        }
        QuadraticHamiltonian { space, a }
    }

    /// Quadratic part at the origin of an expression on a fiber layout:
    /// `A_ik = ½ ∂_i ∂_k H(0)`, from symbolic second derivatives.
    pub fn quadratic_part(h: &HamiltonianExpr) -> Result<QuadraticHamiltonian> {
        let layout = h.layout();
        let d = layout.dim();
        if d == 0 {
            return Err(Error::Dimension { expected: 2, found: 0 });
        }
        let origin = vec![0.0; d];
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            let di = h.partial(layout.var_at(i));
            for k in i..d {
                let dik = di.diff(layout.var_at(k));
                let v = HamiltonianExpr::new(dik, layout)?.eval(&origin);
                a[(i, k)] = 0.5 * v;
                a[(k, i)] = 0.5 * v;
            }
        }
        Ok(QuadraticHamiltonian {
            space: SymplecticSpace { n: layout.dof() },
            a,
        })
    }

    pub fn space(&self) -> SymplecticSpace {
        self.space
    }

    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let d = self.space.dim();
        let mut s = 0.0;
        for i in 0..d {
            for k in 0..d {
                s += z[i] * self.a[(i, k)] * z[k];
            }
        }
        s
    }

    pub fn add(&self, other: &QuadraticHamiltonian) -> Result<QuadraticHamiltonian> {
        self.same_space(other)?;
        Ok(QuadraticHamiltonian {
            space: self.space,
            a: &self.a + &other.a,
        })
    }

    pub fn scale(&self, c: f64) -> QuadraticHamiltonian {
        QuadraticHamiltonian {
            space: self.space,
            a: &self.a * c,
        }
    }

    /// `z ↦ q(Sz)`.
    pub fn pullback(&self, s: &DMatrix<f64>) -> QuadraticHamiltonian {
        let a = s.transpose() * &self.a * s;
        QuadraticHamiltonian {
            space: self.space,
            a: (&a + a.transpose()) * 0.5,
        }
    }

    fn same_space(&self, other: &QuadraticHamiltonian) -> Result<()> {
        if self.space != other.space {
            return Err(Error::Dimension {
                expected: self.space.dim(),
                found: other.space.dim(),
            });
        }
        Ok(())
    }

    /// The quadratic as an expression on the fiber layout with `n` pairs.
    pub fn to_expr(&self) -> HamiltonianExpr {
        let layout = Layout::fiber(self.n());
        let d = self.space.dim();
        let mut terms = Vec::new();
        for i in 0..d {
            for k in i..d {
                let c = if i == k { self.a[(i, i)] } else { 2.0 * self.a[(i, k)] };
                if c == 0.0 {
                    continue;
                }
                let vi = Expr::var(layout.var_at(i));
                let m = if i == k {
                    Expr::powi(vi, 2)
                } else {
                    Expr::mul(vi, Expr::var(layout.var_at(k)))
                };
                terms.push(Expr::mul(Expr::c(c), m));
            }
        }
        HamiltonianExpr::new(Expr::sum(terms), layout).expect("variables lie in the layout")
    }
}

/// `{a, b}` under the global convention.
pub fn poisson_bracket(
    a: &QuadraticHamiltonian,
    b: &QuadraticHamiltonian,
) -> Result<QuadraticHamiltonian> {
    a.same_space(b)?;
    let j = a.space.j();
    let ajb = &a.a * &j * &b.a;
    let c = (&ajb + ajb.transpose()) * 2.0;
    Ok(QuadraticHamiltonian { space: a.space, a: c })
}

/// `lin(q) = 2JA`, the matrix of the linear vector field `X_q`.
pub fn hamiltonian_matrix(q: &QuadraticHamiltonian) -> DMatrix<f64> {
    q.space.j() * &q.a * 2.0
}

/// Ordered family of quadratics over one space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFamily {
    space: SymplecticSpace,
    members: Vec<QuadraticHamiltonian>,
}

impl QuadraticFamily {
    pub fn new(members: Vec<QuadraticHamiltonian>) -> Result<QuadraticFamily> {
        let space = members
            .first()
            .map(|m| m.space)
            .ok_or(Error::Arity { expected: 1, found: 0 })?;
        for m in &members {
            if m.space != space {
                return Err(Error::Dimension {
                    expected: space.dim(),
                    found: m.space.dim(),
                });
            }
        }
        Ok(QuadraticFamily { space, members })
    }

    /// Parses each member as an expression on the fiber layout with `n`
    /// pairs and extracts its quadratic part.
    pub fn from_exprs(n: usize, texts: &[&str]) -> Result<QuadraticFamily> {
        let members = texts
            .iter()
            .map(|t| {
                let h = HamiltonianExpr::parse_on(t, Layout::fiber(n))?;
                QuadraticHamiltonian::quadratic_part(&h)
            })
            .collect::<Result<Vec<_>>>()?;
        QuadraticFamily::new(members)
    }

    pub fn space(&self) -> SymplecticSpace {
        self.space
    }

    pub fn members(&self) -> &[QuadraticHamiltonian] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Largest coefficient of any pairwise bracket.
    pub fn max_bracket(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                let c = poisson_bracket(a, b).expect("shared space");
                worst = worst.max(c.a.amax());
            }
        }
        worst
    }

    /// `Σ c_i lin(q_i)`.
    pub fn combination(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let d = self.space.dim();
        let mut b = DMatrix::zeros(d, d);
        for (c, q) in coeffs.iter().zip(&self.members) {
            b += hamiltonian_matrix(q) * *c;
        }
        b
    }

    fn scale(&self) -> f64 {
        self.members.iter().map(|m| m.a.amax()).fold(0.0, f64::max)
    }

    pub fn conjugate(&self, s: &DMatrix<f64>) -> QuadraticFamily {
        QuadraticFamily {
            space: self.space,
            members: self.members.iter().map(|m| m.pullback(s)).collect(),
        }
    }
}

/// Settings shared by the randomized linear-algebra tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub trials: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            trials: 5,
            eps: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NondegeneracyFailure {
    BracketsDoNotVanish,
    LinearlyDependent,
    ZeroEigenvalue,
    NotSemisimple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub nondegenerate: bool,
    pub failure: Option<NondegeneracyFailure>,
    pub max_bracket: f64,
    pub rank: usize,
    pub detail: String,
}

fn draw_coefficients(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Eigenvalues of `b` sorted by (real, imaginary) part.
pub fn spectrum(b: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let mut ev = linalg::eigenvalues(b)?;
    ev.sort_by(|a, c| a.re.total_cmp(&c.re).then(a.im.total_cmp(&c.im)));
    Ok(ev)
}

type Verdict = std::result::Result<(), (NondegeneracyFailure, String)>;

/// Generic element test: semisimple with no zero eigenvalue.
fn generic_element_check(b: &DMatrix<f64>, eps: f64) -> Result<Verdict> {
    let norm = b.amax().max(f64::MIN_POSITIVE);
    let ev = spectrum(b)?;
    if let Some(z) = ev.iter().find(|l| l.norm() <= eps * norm) {
        return Ok(Err((
            NondegeneracyFailure::ZeroEigenvalue,
            format!("eigenvalue {z} below {eps:e}·|B|"),
        )));
    }
    let cluster_tol = eps.sqrt() * norm;
    let mut seen: Vec<Complex64> = Vec::new();
    for &l in &ev {
        if seen.iter().any(|s| (s - l).norm() <= cluster_tol) {
            continue;
        }
        seen.push(l);
        let alg = ev.iter().filter(|m| (*m - l).norm() <= cluster_tol).count();
        let geo = linalg::complex_nullity(b, l, cluster_tol)?;
        if geo != alg {
            return Ok(Err((
                NondegeneracyFailure::NotSemisimple,
                format!("eigenvalue {l}: algebraic multiplicity {alg}, geometric {geo}"),
            )));
        }
    }
    Ok(Ok(()))
}

/// Cartan subalgebra test for a family of `n` quadratics on `R^{2n}`.
pub fn is_nondegenerate(fam: &QuadraticFamily, opts: &ClassifyOptions) -> Result<NondegeneracyReport> {
    let n = fam.space.n;
    if fam.len() != n {
        return Err(Error::Arity {
            expected: n,
            found: fam.len(),
        });
    }
    nondegeneracy_report(fam, opts)
}

fn nondegeneracy_report(fam: &QuadraticFamily, opts: &ClassifyOptions) -> Result<NondegeneracyReport> {
    let scale = fam.scale().max(f64::MIN_POSITIVE);
    let max_bracket = fam.max_bracket();
    let d = fam.space.dim();
    let flat = DMatrix::from_fn(fam.len(), d * (d + 1) / 2, |r, c| {
        let (mut i, mut k, mut idx) = (0, 0, 0);
        'outer: for ii in 0..d {
            for kk in ii..d {
                if idx == c {
                    i = ii;
                    k = kk;
                    break 'outer;
                }
                idx += 1;
            }
        }
        fam.members[r].a[(i, k)]
    });
    let rank = linalg::rank(&flat, opts.eps)?;
    let mut report = NondegeneracyReport {
        nondegenerate: false,
        failure: None,
        max_bracket,
        rank,
        detail: String::new(),
    };
    if max_bracket >= opts.eps * scale.max(1.0) {
        report.failure = Some(NondegeneracyFailure::BracketsDoNotVanish);
        report.detail = format!("pairwise bracket coefficient {max_bracket:e}");
        return Ok(report);
    }
    if rank < fam.len() {
        report.failure = Some(NondegeneracyFailure::LinearlyDependent);
        report.detail = format!("rank {rank} < {}", fam.len());
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut last = None;
    for _ in 0..opts.trials.max(1) {
        let c = draw_coefficients(&mut rng, fam.len());
        match generic_element_check(&fam.combination(&c), opts.eps)? {
            Ok(()) => {
                report.nondegenerate = true;
                return Ok(report);
            }
            Err(e) => last = Some(e),
        }
    }
    let (f, detail) = last.expect("at least one trial");
    report.failure = Some(f);
    report.detail = detail;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WilliamsonType {
    pub k_e: usize,
    pub k_h: usize,
    pub k_f: usize,
    pub m: usize,
    pub n: usize,
}

impl WilliamsonType {
    pub fn new(k_e: usize, k_h: usize, k_f: usize, m: usize, n: usize) -> Result<WilliamsonType> {
        if k_e + k_h + 2 * k_f + m != n {
            return Err(Error::ModelConstruction(format!(
                "k_e + k_h + 2 k_f = {} but n - m = {}",
                k_e + k_h + 2 * k_f,
                n as i64 - m as i64
            )));
        }
        Ok(WilliamsonType { k_e, k_h, k_f, m, n })
    }

    /// Type of the fiber part alone (`m = 0`, `n` = fiber pairs).
    pub fn fiber(k_e: usize, k_h: usize, k_f: usize) -> WilliamsonType {
        WilliamsonType {
            k_e,
            k_h,
            k_f,
            m: 0,
            n: k_e + k_h + 2 * k_f,
        }
    }

    pub fn fiber_pairs(&self) -> usize {
        self.k_e + self.k_h + 2 * self.k_f
    }

    pub fn triple(&self) -> (usize, usize, usize) {
        (self.k_e, self.k_h, self.k_f)
    }
}

/// The model quadratics of a type on `R^{2(n-m)}`, ordered elliptic,
/// hyperbolic, focus-focus: `x²+y²`, `xy`, and for each focus-focus pair
/// `x_i y_{i+1} - x_{i+1} y_i`, `x_i y_i + x_{i+1} y_{i+1}`.
pub fn model_family(t: &WilliamsonType) -> QuadraticFamily {
    let k = t.fiber_pairs();
    let mut members = Vec::with_capacity(k);
    let mut pair = 0;
    for _ in 0..t.k_e {
        members.push(QuadraticHamiltonian::from_monomials(
            k,
            &[(2 * pair, 2 * pair, 1.0), (2 * pair + 1, 2 * pair + 1, 1.0)],
        ));
        pair += 1;
    }
    for _ in 0..t.k_h {
        members.push(QuadraticHamiltonian::from_monomials(k, &[(2 * pair, 2 * pair + 1, 1.0)]));
        pair += 1;
    }
    for _ in 0..t.k_f {
        let (x1, y1, x2, y2) = (2 * pair, 2 * pair + 1, 2 * pair + 2, 2 * pair + 3);
        members.push(QuadraticHamiltonian::from_monomials(k, &[(x1, y2, 1.0), (x2, y1, -1.0)]));
        members.push(QuadraticHamiltonian::from_monomials(k, &[(x1, y1, 1.0), (x2, y2, 1.0)]));
        pair += 2;
    }
    QuadraticFamily {
        space: SymplecticSpace { n: k.max(1) },
        members,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub wtype: WilliamsonType,
    /// Spectrum of the first generic combination, sorted.
    pub eigenvalues: Vec<[f64; 2]>,
    /// Largest defect of the `λ ↦ -λ`, `λ ↦ λ̄` symmetry, relative to `|B|`.
    pub symmetry_defect: f64,
}

fn count_type(ev: &[Complex64], eps: f64) -> (usize, usize, usize) {
    let (mut e, mut h, mut f) = (0, 0, 0);
    for l in ev {
        let thr = eps * l.norm();
        let re_zero = l.re.abs() < thr;
        let im_zero = l.im.abs() < thr;
        if re_zero && l.im > thr {
            e += 1;
        } else if im_zero && l.re > thr {
            h += 1;
        } else if l.re > thr && l.im > thr {
            f += 1;
        }
    }
    (e, h, f)
}

fn symmetry_defect(ev: &[Complex64], norm: f64) -> f64 {
    let nearest = |target: Complex64| {
        ev.iter()
            .map(|m| (m - target).norm())
            .fold(f64::INFINITY, f64::min)
    };
    ev.iter()
        .map(|l| nearest(-l).max(nearest(l.conj())))
        .fold(0.0, f64::max)
        / norm
}

/// Williamson type of the `(n - m)`-member reduced family. The family lives
/// on `R^{2(n-m)}`; `m` is the rank of the orbit and is carried into the
/// result so that `k_e + k_h + 2k_f = n - m`.
pub fn williamson_type(fam: &QuadraticFamily, m: usize, opts: &ClassifyOptions) -> Result<Classification> {
    let report = is_nondegenerate(fam, opts)?;
    if !report.nondegenerate {
        return Err(Error::Nondegeneracy(format!(
            "{:?}: {}",
            report.failure.expect("failure recorded"),
            report.detail
        )));
    }
    let k = fam.space.n;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut first: Option<((usize, usize, usize), Vec<Complex64>)> = None;
    let mut worst_defect = 0.0f64;
    for trial in 0..opts.trials.max(1) {
        let c = draw_coefficients(&mut rng, fam.len());
        let b = fam.combination(&c);
        let ev = spectrum(&b)?;
        let norm = b.amax().max(f64::MIN_POSITIVE);
        let defect = symmetry_defect(&ev, norm);
        worst_defect = worst_defect.max(defect);
        if defect > opts.eps.sqrt() {
            return Err(Error::NumericalDegeneracy(format!(
                "spectrum not symmetric under λ ↦ -λ, λ̄ (defect {defect:e})"
            )));
        }
        let t = count_type(&ev, opts.eps);
        if t.0 + t.1 + 2 * t.2 != k {
            return Err(Error::Instability(format!(
                "trial {trial}: eigenvalues {ev:?} do not split into {k} components"
            )));
        }
        match &first {
            None => first = Some((t, ev)),
            Some((t0, _)) if *t0 != t => {
                return Err(Error::Instability(format!(
                    "trial 0 gave {t0:?}, trial {trial} gave {t:?}"
                )))
            }
            _ => {}
        }
    }
    let ((k_e, k_h, k_f), ev) = first.expect("at least one trial");
    Ok(Classification {
        wtype: WilliamsonType::new(k_e, k_h, k_f, m, k + m)?,
        eigenvalues: ev.iter().map(|l| [l.re, l.im]).collect(),
        symmetry_defect: worst_defect,
    })
}

fn distinct_spectrum(ev: &[Complex64], tol: f64) -> bool {
    ev.iter()
        .enumerate()
        .all(|(i, a)| ev[i + 1..].iter().all(|b| (a - b).norm() > tol))
}

fn real_vec(v: &nalgebra::DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Symplectic matrix `S` such that every member pulled back by `S` is a
/// combination of the model quadratics (see [`model_family`]).
pub fn normalizing_basis(fam: &QuadraticFamily, opts: &ClassifyOptions) -> Result<DMatrix<f64>> {
    let cls = williamson_type(fam, 0, opts)?;
    let wt = cls.wtype;
    let d = fam.space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xba515);
    for _ in 0..opts.trials.max(1) * 4 {
        let c = draw_coefficients(&mut rng, fam.len());
        let b = fam.combination(&c);
        let norm = b.amax();
        let ev = spectrum(&b)?;
        let gap = 1e-3 * norm;
        if !distinct_spectrum(&ev, gap) {
            continue;
        }
        let eps = opts.eps;
        let mut ell = Vec::new();
        let mut hyp = Vec::new();
        let mut ff = Vec::new();
        for l in &ev {
            let thr = eps * l.norm();
            if l.re.abs() < thr && l.im > thr {
                ell.push(*l);
            } else if l.im.abs() < thr && l.re > thr {
                hyp.push(*l);
            } else if l.re > thr && l.im > thr {
                ff.push(*l);
            }
        }
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        for l in &ell {
            let (v, _, _) = linalg::complex_null_vector(&b, Complex64::new(0.0, l.im))?;
            let mut a: Vec<f64> = v.iter().map(|c| c.re).collect();
            let mut bb: Vec<f64> = v.iter().map(|c| c.im).collect();
            let w = linalg::omega(&a, &bb);
            if w.abs() < 1e-12 {
                return Err(Error::NumericalDegeneracy(format!(
                    "elliptic eigenvector at {l} has isotropic real/imaginary parts"
                )));
            }
            let s = 1.0 / w.abs().sqrt();
            a.iter_mut().for_each(|x| *x *= s);
            bb.iter_mut().for_each(|x| *x *= s * w.signum());
            cols.push(a);
            cols.push(bb);
        }
        for l in &hyp {
            let u = real_vec(&linalg::real_null_vector(&b, l.re)?);
            let mut w = real_vec(&linalg::real_null_vector(&b, -l.re)?);
            let p = linalg::omega(&u, &w);
            if p.abs() < 1e-12 {
                return Err(Error::NumericalDegeneracy(format!(
                    "hyperbolic eigenvectors at ±{} are ω-orthogonal",
                    l.re
                )));
            }
            w.iter_mut().for_each(|x| *x /= p);
            cols.push(u);
            cols.push(w);
        }
        for l in &ff {
            let (v, _, _) = linalg::complex_null_vector(&b, *l)?;
            let (wp, _, _) = linalg::complex_null_vector(&b, -*l)?;
            let pairing: Complex64 = {
                let j = linalg::j_matrix(d / 2).map(|x| Complex64::new(x, 0.0));
                (v.transpose() * j * &wp)[(0, 0)]
            };
            if pairing.norm() < 1e-12 {
                return Err(Error::NumericalDegeneracy(format!(
                    "focus-focus eigenvectors at {l} are ω-orthogonal"
                )));
            }
            let v = v * (Complex64::new(2.0, 0.0) / pairing);
            let w = wp.map(|c| c.conj());
            let ex1: Vec<f64> = v.iter().map(|c| c.re).collect();
            let ex2: Vec<f64> = v.iter().map(|c| -c.im).collect();
            let ey1: Vec<f64> = w.iter().map(|c| c.re).collect();
            let ey2: Vec<f64> = w.iter().map(|c| -c.im).collect();
            cols.extend([ex1, ey1, ex2, ey2]);
        }
        symplectic_gram_schmidt(&mut cols);
        let s = DMatrix::from_fn(d, d, |i, k| cols[k][i]);
        let target = model_family(&WilliamsonType::fiber(wt.k_e, wt.k_h, wt.k_f));
        if linalg::symplectic_residual(&s) > eps.max(1e-10) {
            continue;
        }
        if model_residual(fam, &s, &target)? <= eps.max(1e-10) {
            return Ok(s);
        }
    }
    Err(Error::NumericalDegeneracy(
        "could not pair eigenvectors into a symplectic normalizing basis".into(),
    ))
}

/// Re-orthogonalizes consecutive pairs `(e, f)` of columns so that
/// `ω(e, f) = 1` and distinct pairs are ω-orthogonal.
fn symplectic_gram_schmidt(cols: &mut [Vec<f64>]) {
    let pairs = cols.len() / 2;
    for p in 0..pairs {
        let (head, tail) = cols.split_at_mut(2 * p + 2);
        let e = head[2 * p].clone();
        let mut f = head[2 * p + 1].clone();
        let w = linalg::omega(&e, &f);
        f.iter_mut().for_each(|x| *x /= w);
        head[2 * p + 1] = f.clone();
        for v in tail.iter_mut() {
            let a = linalg::omega(v, &f);
            let b = linalg::omega(v, &e);
            for i in 0..v.len() {
                v[i] += -a * e[i] + b * f[i];
            }
        }
    }
}

/// Largest least-squares residual when each pulled-back member is written
/// in the span of `target`, relative to the member's size.
pub fn model_residual(fam: &QuadraticFamily, s: &DMatrix<f64>, target: &QuadraticFamily) -> Result<f64> {
    let d = fam.space.dim();
    let cols = target.len();
    let basis = DMatrix::from_fn(d * d, cols, |r, c| target.members[c].a[(r / d, r % d)]);
    let svd = linalg::bounded_svd(basis.clone(), true, true)?;
    Ok(fam.members
        .iter()
        .map(|m| {
            let p = m.pullback(s);
            let rhs = nalgebra::DVector::from_fn(d * d, |r, _| p.a[(r / d, r % d)]);
            let coef = svd.solve(&rhs, 1e-14).expect("svd solve");
            let res = (&basis * coef - &rhs).amax();
            res / p.a.amax().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max))
}

/// Coefficients of each pulled-back member in the model basis.
pub fn model_coefficients(fam: &QuadraticFamily, s: &DMatrix<f64>, target: &QuadraticFamily) -> Result<Vec<Vec<f64>>> {
    let d = fam.space.dim();
    let basis = DMatrix::from_fn(d * d, target.len(), |r, c| target.members[c].a[(r / d, r % d)]);
    let svd = linalg::bounded_svd(basis, true, true)?;
    Ok(fam.members
        .iter()
        .map(|m| {
            let p = m.pullback(s);
            let rhs = nalgebra::DVector::from_fn(d * d, |r, _| p.a[(r / d, r % d)]);
            svd.solve(&rhs, 1e-14).expect("svd solve").iter().copied().collect()
        })
        .collect())
}

/// JSON form of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub n: usize,
    pub members: Vec<Vec<Vec<f64>>>,
}

impl FamilyFile {
    pub fn into_family(self) -> Result<QuadraticFamily> {
        let space = SymplecticSpace::new(self.n)?;
        let members = self
            .members
            .iter()
            .map(|rows| {
                let a = linalg::from_rows(rows).ok_or(Error::Dimension {
                    expected: space.dim(),
                    found: rows.len(),
                })?;
                QuadraticHamiltonian::new(space, a)
            })
            .collect::<Result<Vec<_>>>()?;
        QuadraticFamily::new(members)
    }

    pub fn from_family(fam: &QuadraticFamily) -> FamilyFile {
        FamilyFile {
            n: fam.space.n,
            members: fam.members.iter().map(|m| linalg::to_rows(&m.a)).collect(),
        }
    }
}

/// JSON form of a classification result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub k_e: usize,
    pub k_h: usize,
    pub k_f: usize,
    pub m: usize,
    pub eigenvalues: Vec<[f64; 2]>,
}

impl From<&Classification> for ClassificationReport {
    fn from(c: &Classification) -> Self {
        ClassificationReport {
            k_e: c.wtype.k_e,
            k_h: c.wtype.k_h,
            k_f: c.wtype.k_f,
            m: c.wtype.m,
            eigenvalues: c.eigenvalues.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_symplectic;

    fn fam(n: usize, texts: &[&str]) -> QuadraticFamily {
        QuadraticFamily::from_exprs(n, texts).unwrap()
    }

    fn q(n: usize, text: &str) -> QuadraticHamiltonian {
        fam(n, &[text]).members[0].clone()
    }

    #[test]
    fn bracket_of_x2_and_y2_is_4xy() {
        let c = poisson_bracket(&q(1, "x^2"), &q(1, "y^2")).unwrap();
        assert_eq!(c, q(1, "4*x*y"));
    }

    #[test]
    fn bracket_agrees_with_symbolic_bracket() {
        let a = HamiltonianExpr::parse("x1*y2 - 3*x2^2 + y1*y2").unwrap();
        let b = HamiltonianExpr::parse("x1^2 + 2*x2*y1 - y2^2").unwrap();
        let sym = a.bracket(&b).unwrap();
        let qa = QuadraticHamiltonian::quadratic_part(&a).unwrap();
        let qb = QuadraticHamiltonian::quadratic_part(&b).unwrap();
        let c = poisson_bracket(&qa, &qb).unwrap();
        for z in [[0.3, -0.1, 0.7, 0.2], [1.0, 2.0, -1.0, 0.5]] {
            assert!((c.eval(&z) - sym.eval(&z)).abs() < 1e-12);
        }
    }

    #[test]
    fn focus_focus_pair_commutes() {
        let f = fam(2, &["x1*y2 - x2*y1", "x1*y1 + x2*y2"]);
        assert_eq!(f.max_bracket(), 0.0);
    }

    #[test]
    fn bracket_rejects_mismatched_spaces() {
        assert!(matches!(
            poisson_bracket(&q(1, "x^2"), &q(2, "x1^2")),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn hamiltonian_matrix_eigenvalues() {
        let ev = spectrum(&hamiltonian_matrix(&q(1, "x^2 + y^2"))).unwrap();
        assert!((ev[0] - Complex64::new(0.0, -2.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(0.0, 2.0)).norm() < 1e-14);
        let ev = spectrum(&hamiltonian_matrix(&q(1, "x*y"))).unwrap();
        assert!((ev[0].re + 1.0).abs() < 1e-14 && (ev[1].re - 1.0).abs() < 1e-14);
        assert_eq!(
            hamiltonian_matrix(&QuadraticHamiltonian::zero(SymplecticSpace { n: 1 })),
            DMatrix::zeros(2, 2)
        );
    }

    #[test]
    fn nondegeneracy_examples() {
        let o = ClassifyOptions::default();
        assert!(is_nondegenerate(&fam(1, &["x^2 + y^2"]), &o).unwrap().nondegenerate);
        let r = is_nondegenerate(&fam(1, &["x^2"]), &o).unwrap();
        assert!(!r.nondegenerate);
        assert_eq!(r.failure, Some(NondegeneracyFailure::ZeroEigenvalue));
        assert!(is_nondegenerate(&fam(2, &["x1*y2 - x2*y1", "x1*y1 + x2*y2"]), &o)
            .unwrap()
            .nondegenerate);
        assert!(matches!(
            is_nondegenerate(&fam(2, &["x1^2 + y1^2"]), &o),
            Err(Error::Arity { expected: 2, found: 1 })
        ));
        let r = is_nondegenerate(&fam(2, &["x1^2 + y1^2", "2*x1^2 + 2*y1^2"]), &o).unwrap();
        assert_eq!(r.failure, Some(NondegeneracyFailure::LinearlyDependent));
        let r = is_nondegenerate(&fam(2, &["x1^2", "y1^2 + x2*y2"]), &o).unwrap();
        assert_eq!(r.failure, Some(NondegeneracyFailure::BracketsDoNotVanish));
    }

    #[test]
    fn jordan_block_is_not_semisimple() {
        let shear = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let mut jordan = DMatrix::zeros(4, 4);
        jordan.view_mut((0, 0), (2, 2)).copy_from(&(DMatrix::identity(2, 2) * 1.0 + &shear));
        jordan.view_mut((2, 2), (2, 2)).copy_from(&(DMatrix::identity(2, 2) * -1.0 - shear.transpose()));
        assert_eq!(
            generic_element_check(&jordan, 1e-8).unwrap().unwrap_err().0,
            NondegeneracyFailure::NotSemisimple
        );
    }

    #[test]
    fn classifies_model_blocks() {
        let o = ClassifyOptions::default();
        let t = |f: &QuadraticFamily| williamson_type(f, 0, &o).unwrap().wtype.triple();
        assert_eq!(t(&fam(1, &["x^2 + y^2"])), (1, 0, 0));
        assert_eq!(t(&fam(1, &["x*y"])), (0, 1, 0));
        assert_eq!(t(&fam(2, &["x1*y2 - x2*y1", "x1*y1 + x2*y2"])), (0, 0, 1));
        let c = williamson_type(&fam(1, &["x*y"]), 2, &o).unwrap();
        assert_eq!((c.wtype.m, c.wtype.n), (2, 3));
        assert!(matches!(
            williamson_type(&fam(1, &["x^2"]), 0, &o),
            Err(Error::Nondegeneracy(_))
        ));
    }

    #[test]
    fn focus_focus_combination_spectrum() {
        let f = fam(2, &["x1*y2 - x2*y1", "x1*y1 + x2*y2"]);
        let (a, b) = (0.3, -0.8);
        let ev = spectrum(&f.combination(&[a, b])).unwrap();
        let mut want = [
            Complex64::new(b, a),
            Complex64::new(b, -a),
            Complex64::new(-b, a),
            Complex64::new(-b, -a),
        ];
        want.sort_by(|u, v| u.re.total_cmp(&v.re).then(u.im.total_cmp(&v.im)));
        for (l, w) in ev.iter().zip(&want) {
            assert!((l - w).norm() < 1e-12, "{l} vs {w}");
        }
    }

    #[test]
    fn normalizing_basis_examples() {
        let o = ClassifyOptions::default();
        for (n, texts, model) in [
            (1, vec!["x^2 + y^2"], (1, 0, 0)),
            (1, vec!["2*x^2 + 2*y^2"], (1, 0, 0)),
            (1, vec!["x^2 - y^2"], (0, 1, 0)),
            (2, vec!["x1*y2 - x2*y1", "x1*y1 + x2*y2"], (0, 0, 1)),
            (3, vec!["x1^2 + y1^2", "x2*y2", "3*x3^2 + y3^2"], (2, 1, 0)),
        ] {
            let f = fam(n, &texts);
            let s = normalizing_basis(&f, &o).unwrap();
            assert!(linalg::symplectic_residual(&s) < 1e-8);
            let target = model_family(&WilliamsonType::fiber(model.0, model.1, model.2));
            assert!(model_residual(&f, &s, &target).unwrap() < 1e-8, "{texts:?}");
        }
        // scaling case: pullback is c (x^2 + y^2) with c > 0
        let f = fam(1, &["2*x^2 + 2*y^2"]);
        let s = normalizing_basis(&f, &o).unwrap();
        let target = model_family(&WilliamsonType::fiber(1, 0, 0));
        assert!(model_coefficients(&f, &s, &target).unwrap()[0][0] > 0.0);
    }

    #[test]
    fn normalizing_basis_after_random_conjugation() {
        let o = ClassifyOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = model_family(&WilliamsonType::fiber(1, 1, 1));
        for _ in 0..5 {
            let p = random_symplectic(4, 0.4, &mut rng);
            let f = base.conjugate(&p);
            let s = normalizing_basis(&f, &o).unwrap();
            assert!(linalg::symplectic_residual(&s) < 1e-8);
            assert!(model_residual(&f, &s, &base).unwrap() < 1e-8);
        }
    }

    #[test]
    fn json_round_trip() {
        let f = fam(2, &["x1*y2 - x2*y1", "x1*y1 + x2*y2"]);
        let text = serde_json::to_string(&FamilyFile::from_family(&f)).unwrap();
        let back: FamilyFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_family().unwrap(), f);
    }
}
