//! Linear models `V = D^m × T^m × D^{2(n−m)}`, their twisting groups and
//! automorphisms, and structure checks for maps preserving the model
//! system.
//!
//! Flat coordinates are `(p₁, q₁, …, p_m, q_m, x₁, y₁, …)`, with fiber pairs
//! ordered elliptic, hyperbolic, focus-focus. Angles `q` live in `R/Z`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Layout;
use crate::flows::{MomentMap, NumericMap, Region};
use crate::linalg;
use crate::par;
use crate::symplectic_linear::WilliamsonType;

/// Reduces an angle into `[0, 1)`.
pub fn wrap_unit(q: f64) -> f64 {
    let r = q.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Representative of `q mod 1` in `[−½, ½)`.
pub fn wrap_centered(q: f64) -> f64 {
    let r = wrap_unit(q + 0.5) - 0.5;
    if r < -0.5 {
        r + 1.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub xy: Vec<f64>,
}

impl ModelPoint {
    /// Builds a point with angles reduced into `[0, 1)`.
    pub fn new(p: Vec<f64>, q: Vec<f64>, xy: Vec<f64>) -> ModelPoint {
        ModelPoint {
            p,
            q: q.into_iter().map(wrap_unit).collect(),
            xy,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(2 * self.p.len() + self.xy.len());
        for (p, q) in self.p.iter().zip(&self.q) {
            z.push(*p);
            z.push(*q);
        }
        z.extend_from_slice(&self.xy);
        z
    }

    pub fn from_flat(m: usize, z: &[f64]) -> ModelPoint {
        ModelPoint::new(
            (0..m).map(|i| z[2 * i]).collect(),
            (0..m).map(|i| z[2 * i + 1]).collect(),
            z[2 * m..].to_vec(),
        )
    }

    fn cmp_lex(&self, other: &ModelPoint) -> Ordering {
        self.p
            .iter()
            .chain(&self.q)
            .chain(&self.xy)
            .zip(other.p.iter().chain(&other.q).chain(&other.xy))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    }
}

/// One generator of Γ: simultaneous `(x, y) ↦ (−x, −y)` on the flagged
/// hyperbolic pairs together with a translation of the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaGenerator {
    pub flips: Vec<bool>,
    pub translation: Vec<f64>,
}

/// Finite abelian group, stored as the full list of its elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistingGroup {
    pub generators: Vec<GammaGenerator>,
    #[serde(skip)]
    elements: Vec<GammaGenerator>,
}

const MAX_GROUP_ORDER: usize = 4096;

fn element_key(e: &GammaGenerator) -> (Vec<bool>, Vec<i64>) {
    let t = e
        .translation
        .iter()
        .map(|v| (wrap_unit(*v) * 1e9).round() as i64 % 1_000_000_000)
        .collect();
    (e.flips.clone(), t)
}

impl TwistingGroup {
    pub fn trivial() -> TwistingGroup {
        TwistingGroup {
            generators: Vec::new(),
            elements: Vec::new(),
        }
    }

    /// Enumerates the generated group. Translations must have finite order.
    pub fn new(generators: Vec<GammaGenerator>, k_h: usize, m: usize) -> Result<TwistingGroup> {
        for g in &generators {
            if g.flips.len() != k_h || g.translation.len() != m {
                return Err(Error::ModelConstruction(format!(
                    "generator needs {k_h} flip flags and {m} translations, got {} and {}",
                    g.flips.len(),
                    g.translation.len()
                )));
            }
        }
        let identity = GammaGenerator {
            flips: vec![false; k_h],
            translation: vec![0.0; m],
        };
        let mut seen = BTreeSet::new();
        seen.insert(element_key(&identity));
        let mut elements = vec![identity];
        let mut frontier = 0;
        while frontier < elements.len() {
            let e = elements[frontier].clone();
            frontier += 1;
            for g in &generators {
                let c = compose_gamma(&e, g);
                if seen.insert(element_key(&c)) {
                    elements.push(c);
                    if elements.len() > MAX_GROUP_ORDER {
                        return Err(Error::ModelConstruction(
                            "twisting group is not finite (translations of infinite order?)".into(),
                        ));
                    }
                }
            }
        }
        Ok(TwistingGroup { generators, elements })
    }

    /// All elements, identity first.
    pub fn elements(&self) -> &[GammaGenerator] {
        &self.elements
    }

    pub fn order(&self) -> usize {
        self.elements.len().max(1)
    }
}

fn compose_gamma(a: &GammaGenerator, b: &GammaGenerator) -> GammaGenerator {
    GammaGenerator {
        flips: a.flips.iter().zip(&b.flips).map(|(u, v)| u ^ v).collect(),
        translation: a
            .translation
            .iter()
            .zip(&b.translation)
            .map(|(u, v)| wrap_unit(u + v))
            .collect(),
    }
}

/// JSON description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub n: usize,
    pub m: usize,
    pub k_e: usize,
    pub k_h: usize,
    pub k_f: usize,
    #[serde(default)]
    pub gamma: Vec<GammaGenerator>,
    #[serde(default = "default_radius")]
    pub radius_p: f64,
    #[serde(default = "default_radius")]
    pub radius_xy: f64,
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub n: usize,
    pub m: usize,
    pub wtype: WilliamsonType,
    pub radius_p: f64,
    pub radius_xy: f64,
    pub gamma: TwistingGroup,
}

impl LinearModel {
    pub fn new(wtype: WilliamsonType) -> LinearModel {
        LinearModel {
            n: wtype.n,
            m: wtype.m,
            wtype,
            radius_p: 1.0,
            radius_xy: 1.0,
            gamma: TwistingGroup::trivial(),
        }
    }

    /// Model twisted by the group generated by `generators`; rejected unless
    /// Γ acts freely.
    pub fn twisted(wtype: WilliamsonType, generators: Vec<GammaGenerator>) -> Result<LinearModel> {
        let gamma = TwistingGroup::new(generators, wtype.k_h, wtype.m)?;
        let model = LinearModel {
            gamma,
            ..LinearModel::new(wtype)
        };
        model.check_free()?;
        Ok(model)
    }

    pub fn from_descriptor(d: &ModelDescriptor) -> Result<LinearModel> {
        let wtype = WilliamsonType::new(d.k_e, d.k_h, d.k_f, d.m, d.n)
            .map_err(|e| Error::ModelConstruction(e.to_string()))?;
        if !(d.radius_p > 0.0 && d.radius_xy > 0.0) {
            return Err(Error::ModelConstruction("radii must be positive".into()));
        }
        let mut model = LinearModel::twisted(wtype, d.gamma.clone())?;
        model.radius_p = d.radius_p;
        model.radius_xy = d.radius_xy;
        Ok(model)
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            n: self.n,
            m: self.m,
            k_e: self.wtype.k_e,
            k_h: self.wtype.k_h,
            k_f: self.wtype.k_f,
            gamma: self.gamma.generators.clone(),
            radius_p: self.radius_p,
            radius_xy: self.radius_xy,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.m, self.wtype.fiber_pairs())
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Moment map as expressions: `p_i`, then the fiber components.
    pub fn moment_exprs(&self) -> Vec<String> {
        let mut out: Vec<String> = (1..=self.m).map(|i| format!("p{i}")).collect();
        let mut j = 1;
        for _ in 0..self.wtype.k_e {
            out.push(format!("x{j}^2 + y{j}^2"));
            j += 1;
        }
        for _ in 0..self.wtype.k_h {
            out.push(format!("x{j}*y{j}"));
            j += 1;
        }
        for _ in 0..self.wtype.k_f {
            let k = j + 1;
            out.push(format!("x{j}*y{k} - x{k}*y{j}"));
            out.push(format!("x{j}*y{j} + x{k}*y{k}"));
            j += 2;
        }
        out
    }

    pub fn moment(&self) -> Result<MomentMap> {
        let texts = self.moment_exprs();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        MomentMap::parse(&refs, self.layout())
    }

    fn check_shape(&self, pt: &ModelPoint) -> Result<()> {
        let k = 2 * self.wtype.fiber_pairs();
        if pt.p.len() != self.m || pt.q.len() != self.m || pt.xy.len() != k {
            return Err(Error::Dimension {
                expected: 2 * self.m + k,
                found: pt.p.len() + pt.q.len() + pt.xy.len(),
            });
        }
        Ok(())
    }

    pub fn check_domain(&self, pt: &ModelPoint) -> Result<()> {
        self.check_shape(pt)?;
        let np = pt.p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nxy = pt.xy.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(np <= self.radius_p) || !(nxy <= self.radius_xy) {
            return Err(Error::Domain(format!(
                "|p| = {np}, |xy| = {nxy} (radii {}, {})",
                self.radius_p, self.radius_xy
            )));
        }
        Ok(())
    }

    /// `(p₁, …, p_m, h₁, …, h_{n−m})`.
    pub fn moment_map(&self, pt: &ModelPoint) -> Result<Vec<f64>> {
        self.check_domain(pt)?;
        Ok(self.moment_unchecked(&pt.p, &pt.xy))
    }

    fn moment_unchecked(&self, p: &[f64], xy: &[f64]) -> Vec<f64> {
        let mut out = p.to_vec();
        let mut j = 0;
        for _ in 0..self.wtype.k_e {
            out.push(xy[2 * j] * xy[2 * j] + xy[2 * j + 1] * xy[2 * j + 1]);
            j += 1;
        }
        for _ in 0..self.wtype.k_h {
            out.push(xy[2 * j] * xy[2 * j + 1]);
            j += 1;
        }
        for _ in 0..self.wtype.k_f {
            let (x1, y1, x2, y2) = (xy[2 * j], xy[2 * j + 1], xy[2 * j + 2], xy[2 * j + 3]);
            out.push(x1 * y2 - x2 * y1);
            out.push(x1 * y1 + x2 * y2);
            j += 2;
        }
        out
    }

    /// Moment map on flat coordinates.
    pub fn moment_flat(&self, z: &[f64]) -> Vec<f64> {
        let p: Vec<f64> = (0..self.m).map(|i| z[2 * i]).collect();
        self.moment_unchecked(&p, &z[2 * self.m..])
    }

    /// Action of one Γ element.
    pub fn apply_gamma(&self, g: &GammaGenerator, pt: &ModelPoint) -> ModelPoint {
        let mut xy = pt.xy.clone();
        let base = self.wtype.k_e;
        for (i, f) in g.flips.iter().enumerate() {
            if *f {
                xy[2 * (base + i)] = -xy[2 * (base + i)];
                xy[2 * (base + i) + 1] = -xy[2 * (base + i) + 1];
            }
        }
        ModelPoint::new(
            pt.p.clone(),
            pt.q.iter().zip(&g.translation).map(|(q, t)| q + t).collect(),
            xy,
        )
    }

    /// Γ-orbit of `pt`, in group-element order.
    pub fn orbit(&self, pt: &ModelPoint) -> Vec<ModelPoint> {
        if self.gamma.elements().is_empty() {
            return vec![pt.clone()];
        }
        self.gamma
            .elements()
            .iter()
            .map(|g| self.apply_gamma(g, pt))
            .collect()
    }

    /// Orbit enumeration at a generic point and at `xy = 0`.
    fn check_free(&self) -> Result<()> {
        let k = 2 * self.wtype.fiber_pairs();
        let generic = ModelPoint::new(
            (0..self.m).map(|i| 0.1 + 0.01 * i as f64).collect(),
            (0..self.m).map(|i| 0.123 + 0.071 * i as f64).collect(),
            (0..k).map(|i| 0.05 + 0.013 * i as f64).collect(),
        );
        let zero_fiber = ModelPoint {
            xy: vec![0.0; k],
            ..generic.clone()
        };
        for pt in [generic, zero_fiber] {
            let orbit = self.orbit(&pt);
            for (i, a) in orbit.iter().enumerate().skip(1) {
                let fixed = a
                    .q
                    .iter()
                    .zip(&pt.q)
                    .all(|(u, v)| wrap_centered(u - v).abs() < 1e-12)
                    && a.xy == pt.xy;
                if fixed {
                    return Err(Error::ModelConstruction(format!(
                        "twisting group element {i} fixes {:?}; the action is not free",
                        pt.to_flat()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lexicographic minimum of the Γ-orbit in the order `(p, q, xy)`.
    pub fn quotient_canonicalize(&self, pt: &ModelPoint) -> Result<ModelPoint> {
        self.check_shape(pt)?;
        let pt = ModelPoint::new(pt.p.clone(), pt.q.clone(), pt.xy.clone());
        Ok(self
            .orbit(&pt)
            .into_iter()
            .min_by(|a, b| a.cmp_lex(b))
            .unwrap_or(pt))
    }

    /// Flow of the torus action: `q ↦ q + t·direction`. Under the fixed
    /// convention this is the flow of `−Σ direction_i p_i`.
    pub fn torus_action_flow(&self, direction: &[f64], t: f64, pt: &ModelPoint) -> Result<ModelPoint> {
        self.check_shape(pt)?;
        if direction.len() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                found: direction.len(),
            });
        }
        Ok(ModelPoint::new(
            pt.p.clone(),
            pt.q.iter().zip(direction).map(|(q, d)| q + t * d).collect(),
            pt.xy.clone(),
        ))
    }

    pub fn identity_automorphism(&self) -> ModelAutomorphism {
        ModelAutomorphism {
            torus_translation: vec![0.0; self.m],
            elliptic_angles: vec![0.0; self.wtype.k_e],
            hyperbolic_parts: vec![(0.0, false); self.wtype.k_h],
            ff_parts: vec![(0.0, 0.0); self.wtype.k_f],
        }
    }

    pub fn apply_automorphism(&self, a: &ModelAutomorphism, pt: &ModelPoint) -> Result<ModelPoint> {
        self.check_shape(pt)?;
        a.check_shape(&self.wtype)?;
        let m = a.fiber_matrix();
        let xy: Vec<f64> = (0..pt.xy.len())
            .map(|r| (0..pt.xy.len()).map(|c| m[(r, c)] * pt.xy[c]).sum())
            .collect();
        Ok(ModelPoint::new(
            pt.p.clone(),
            pt.q.iter().zip(&a.torus_translation).map(|(q, t)| q + t).collect(),
            xy,
        ))
    }

    /// Tensor grid over the domain box, `per_axis` points per coordinate;
    /// `q` runs over `j/per_axis`. Points outside the disks are dropped.
    pub fn sample_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let k = 2 * self.wtype.fiber_pairs();
        let rp = self.radius_p / (self.m.max(1) as f64).sqrt();
        let rx = self.radius_xy / (k.max(1) as f64).sqrt();
        let d = self.dim();
        let per = per_axis.max(2);
        let total = per.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|c| {
                        let j = idx % per;
                        idx /= per;
                        let s = j as f64 / (per - 1) as f64;
                        if c < 2 * self.m && c % 2 == 1 {
                            j as f64 / per as f64
                        } else if c < 2 * self.m {
                            -rp + 2.0 * rp * s
                        } else {
                            -rx + 2.0 * rx * s
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Halton probes in the domain box (used when a full grid is too big).
    pub fn sample_halton(&self, count: usize) -> Vec<Vec<f64>> {
        let k = 2 * self.wtype.fiber_pairs();
        let rp = self.radius_p / (self.m.max(1) as f64).sqrt();
        let rx = self.radius_xy / (k.max(1) as f64).sqrt();
        let (lo, hi): (Vec<f64>, Vec<f64>) = (0..self.dim())
            .map(|c| {
                if c < 2 * self.m && c % 2 == 1 {
                    (0.0, 1.0)
                } else if c < 2 * self.m {
                    (-rp, rp)
                } else {
                    (-rx, rx)
                }
            })
            .unzip();
        Region { lo, hi }.halton(count)
    }
}

/// Element of the automorphism group `T^m × T^{k_e} × (R × Z/2)^{k_h} ×
/// (R × T¹)^{k_f}`. Angles are in radians, translations in `R/Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAutomorphism {
    pub torus_translation: Vec<f64>,
    pub elliptic_angles: Vec<f64>,
    /// `(log-scale, sign flip)`.
    pub hyperbolic_parts: Vec<(f64, bool)>,
    /// `(log-scale, rotation angle)`.
    pub ff_parts: Vec<(f64, f64)>,
}

impl ModelAutomorphism {
    fn check_shape(&self, w: &WilliamsonType) -> Result<()> {
        let ok = self.torus_translation.len() == w.m
            && self.elliptic_angles.len() == w.k_e
            && self.hyperbolic_parts.len() == w.k_h
            && self.ff_parts.len() == w.k_f;
        if ok {
            Ok(())
        } else {
            Err(Error::ModelConstruction("automorphism does not match the model type".into()))
        }
    }

    /// Random element: translations in `[0, 1)`, angles in `[0, 2π)`,
    /// log-scales in `[−1, 1]`.
    pub fn random<R: Rng + ?Sized>(w: &WilliamsonType, rng: &mut R) -> ModelAutomorphism {
        let tau = 2.0 * PI;
        ModelAutomorphism {
            torus_translation: (0..w.m).map(|_| rng.gen_range(0.0..1.0)).collect(),
            elliptic_angles: (0..w.k_e).map(|_| rng.gen_range(0.0..tau)).collect(),
            hyperbolic_parts: (0..w.k_h).map(|_| (rng.gen_range(-1.0..=1.0), rng.gen_bool(0.5))).collect(),
            ff_parts: (0..w.k_f).map(|_| (rng.gen_range(-1.0..=1.0), rng.gen_range(0.0..tau))).collect(),
        }
    }

    /// Group law on parameters.
    pub fn compose(&self, other: &ModelAutomorphism) -> ModelAutomorphism {
        let two_pi = 2.0 * PI;
        ModelAutomorphism {
            torus_translation: self
                .torus_translation
                .iter()
                .zip(&other.torus_translation)
                .map(|(a, b)| wrap_unit(a + b))
                .collect(),
            elliptic_angles: self
                .elliptic_angles
                .iter()
                .zip(&other.elliptic_angles)
                .map(|(a, b)| (a + b).rem_euclid(two_pi))
                .collect(),
            hyperbolic_parts: self
                .hyperbolic_parts
                .iter()
                .zip(&other.hyperbolic_parts)
                .map(|(a, b)| (a.0 + b.0, a.1 ^ b.1))
                .collect(),
            ff_parts: self
                .ff_parts
                .iter()
                .zip(&other.ff_parts)
                .map(|(a, b)| (a.0 + b.0, (a.1 + b.1).rem_euclid(two_pi)))
                .collect(),
        }
    }

    /// Action on the fiber coordinates.
    pub fn fiber_matrix(&self) -> DMatrix<f64> {
        let k = 2 * (self.elliptic_angles.len() + self.hyperbolic_parts.len() + 2 * self.ff_parts.len());
        let mut m = DMatrix::zeros(k, k);
        let mut j = 0;
        for th in &self.elliptic_angles {
            let (s, c) = th.sin_cos();
            m[(j, j)] = c;
            m[(j, j + 1)] = s;
            m[(j + 1, j)] = -s;
            m[(j + 1, j + 1)] = c;
            j += 2;
        }
        for (t, flip) in &self.hyperbolic_parts {
            let sg = if *flip { -1.0 } else { 1.0 };
            m[(j, j)] = sg * t.exp();
            m[(j + 1, j + 1)] = sg * (-t).exp();
            j += 2;
        }
        for (t, th) in &self.ff_parts {
            // (x₁, x₂) scaled by e^t and rotated by θ; (y₁, y₂) scaled by
            // e^{−t} and rotated by θ.
            let (s, c) = th.sin_cos();
            let (e, f) = (t.exp(), (-t).exp());
            let (x1, y1, x2, y2) = (j, j + 1, j + 2, j + 3);
            m[(x1, x1)] = e * c;
            m[(x1, x2)] = -e * s;
            m[(x2, x1)] = e * s;
            m[(x2, x2)] = e * c;
            m[(y1, y1)] = f * c;
            m[(y1, y2)] = -f * s;
            m[(y2, y1)] = f * s;
            m[(y2, y2)] = f * c;
            j += 4;
        }
        m
    }

    /// The automorphism as an affine map on flat coordinates.
    pub fn to_numeric_map(&self) -> Result<NumericMap> {
        let m = self.torus_translation.len();
        let fm = self.fiber_matrix();
        let d = 2 * m + fm.nrows();
        let mut full = DMatrix::identity(d, d);
        full.view_mut((2 * m, 2 * m), (fm.nrows(), fm.ncols())).copy_from(&fm);
        let mut shift = vec![0.0; d];
        for (i, t) in self.torus_translation.iter().enumerate() {
            shift[2 * i + 1] = *t;
        }
        NumericMap::affine(full, shift)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapStructure {
    pub index: usize,
    /// Spread of the torus translation `g^h` over the grid.
    pub translation_variation: f64,
    /// `max |fiber(z) − L·xy|`, with `L` the fiber Jacobian at `xy = 0`.
    pub fiber_nonlinearity: f64,
    /// Largest change of `p`.
    pub p_drift: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub eps: f64,
    pub grid_points: usize,
    pub maps: Vec<MapStructure>,
    pub passed: bool,
}

/// Checks that each map acts on the model by a constant torus translation
/// and a linear fiber map.
pub fn verify_linear_action_structure(
    model: &LinearModel,
    maps: &[NumericMap],
    grid: &[Vec<f64>],
    eps: f64,
) -> Result<StructureReport> {
    let m = model.m;
    let d = model.dim();
    let mut out = Vec::with_capacity(maps.len());
    for (index, map) in maps.iter().enumerate() {
        if map.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                found: map.dim(),
            });
        }
        let rows = par::collect_results(par::map(grid, |z| -> Result<(Vec<f64>, f64, f64)> {
            let (w, jac) = map.value_and_jacobian(z)?;
            let sympl = linalg::symplectic_residual(&jac);
            let fz = model.moment_flat(z);
            let fw = model.moment_flat(&w);
            let mom = fz.iter().zip(&fw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if sympl.max(mom) > eps {
                return Err(Error::Rejected(format!(
                    "map {index} does not preserve the system at {z:?}: symplectic {sympl:e}, moment map {mom:e}"
                )));
            }
            // Differences on the universal cover: a linear action lifts to a
            // constant translation there.
            let shift: Vec<f64> = (0..m).map(|i| w[2 * i + 1] - z[2 * i + 1]).collect();
            let p_drift = (0..m).map(|i| (w[2 * i] - z[2 * i]).abs()).fold(0.0, f64::max);
            let mut base = z.to_vec();
            base[2 * m..].iter_mut().for_each(|v| *v = 0.0);
            let (w0, j0) = map.value_and_jacobian(&base)?;
            let k = d - 2 * m;
            let fiber_dev = (0..k)
                .map(|r| {
                    let lin: f64 = w0[2 * m + r]
                        + (0..k).map(|c| j0[(2 * m + r, 2 * m + c)] * z[2 * m + c]).sum::<f64>();
                    (w[2 * m + r] - lin).abs()
                })
                .fold(0.0, f64::max);
            Ok((shift, p_drift, fiber_dev))
        }))?;
        let variation = (0..m)
            .map(|i| {
                let (lo, hi) = rows
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.0[i]), hi.max(r.0[i])));
                hi - lo
            })
            .fold(0.0, f64::max);
        let fiber_nonlinearity = rows.iter().map(|r| r.2).fold(0.0, f64::max);
        let p_drift = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        out.push(MapStructure {
            index,
            translation_variation: variation,
            fiber_nonlinearity,
            p_drift,
            passed: variation < eps && fiber_nonlinearity < eps && p_drift < eps,
        });
    }
    Ok(StructureReport {
        eps,
        grid_points: grid.len(),
        passed: out.iter().all(|s| s.passed),
        maps: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(k_e: usize, k_h: usize, k_f: usize, m: usize) -> LinearModel {
        let n = m + k_e + k_h + 2 * k_f;
        LinearModel::new(WilliamsonType::new(k_e, k_h, k_f, m, n).unwrap())
    }

    #[test]
    fn elliptic_moment() {
        let md = model(1, 0, 0, 0);
        let h = md.moment_map(&ModelPoint::new(vec![], vec![], vec![1.0, 0.0])).unwrap();
        assert_eq!(h, vec![1.0]);
    }

    #[test]
    fn focus_focus_moment() {
        let mut md = model(0, 0, 1, 0);
        md.radius_xy = 10.0;
        let h = md
            .moment_map(&ModelPoint::new(vec![], vec![], vec![1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        // x1 y2 − x2 y1 = 1·4 − 3·2, x1 y1 + x2 y2 = 1·2 + 3·4.
        assert_eq!(h, vec![-2.0, 14.0]);
    }

    #[test]
    fn singular_orbit_maps_to_zero() {
        let md = model(1, 1, 0, 1);
        let h = md
            .moment_map(&ModelPoint::new(vec![0.0], vec![0.4], vec![0.0; 4]))
            .unwrap();
        assert_eq!(h, vec![0.0; 3]);
    }

    #[test]
    fn out_of_domain_rejected() {
        let md = model(1, 0, 0, 0);
        let r = md.moment_map(&ModelPoint::new(vec![], vec![], vec![2.0, 0.0]));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn moment_exprs_agree_with_direct_formula() {
        let md = model(1, 1, 1, 1);
        let mm = md.moment().unwrap();
        let z = [0.1, 0.3, 0.2, -0.1, 0.05, 0.3, -0.2, 0.1, 0.15, 0.25];
        let a = mm.eval(&z);
        let b = md.moment_flat(&z);
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-15));
    }

    #[test]
    fn hyperbolic_scaling_preserves_h() {
        let md = model(0, 1, 0, 0);
        let mut a = md.identity_automorphism();
        a.hyperbolic_parts[0].0 = 0.3;
        let pt = ModelPoint::new(vec![], vec![], vec![0.5, 0.5]);
        let img = md.apply_automorphism(&a, &pt).unwrap();
        assert!((img.xy[0] - 0.5 * 0.3f64.exp()).abs() < 1e-15);
        assert!((img.xy[1] - 0.5 * (-0.3f64).exp()).abs() < 1e-15);
        assert!((img.xy[0] * img.xy[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn identity_automorphism_fixes_points() {
        let md = model(1, 1, 1, 1);
        let pt = ModelPoint::new(vec![0.1], vec![0.7], vec![0.1, 0.2, -0.3, 0.1, 0.05, 0.02, 0.0, -0.1]);
        assert_eq!(md.apply_automorphism(&md.identity_automorphism(), &pt).unwrap(), pt);
    }

    #[test]
    fn ff_automorphism_is_symplectic_and_preserves_moment() {
        let md = model(0, 0, 1, 0);
        let mut a = md.identity_automorphism();
        a.ff_parts[0] = (0.4, 1.1);
        let map = a.to_numeric_map().unwrap();
        let z = [0.1, 0.2, -0.3, 0.15];
        assert!(map.symplectic_residual(&z).unwrap() < 1e-14);
        let w = map.apply(&z).unwrap();
        let (f, g) = (md.moment_flat(&z), md.moment_flat(&w));
        assert!(f.iter().zip(&g).all(|(u, v)| (u - v).abs() < 1e-15));
    }

    #[test]
    fn half_translation_quotient() {
        let w = WilliamsonType::new(0, 1, 0, 1, 2).unwrap();
        let gen = GammaGenerator {
            flips: vec![true],
            translation: vec![0.5],
        };
        let md = LinearModel::twisted(w, vec![gen.clone()]).unwrap();
        assert_eq!(md.gamma.order(), 2);
        let pt = ModelPoint::new(vec![0.2], vec![0.8], vec![0.3, 0.4]);
        let img = md.apply_gamma(&gen, &pt);
        let a = md.quotient_canonicalize(&pt).unwrap();
        let b = md.quotient_canonicalize(&img).unwrap();
        assert_eq!(a, b);
        assert!(a.q[0] < 0.5);
        assert_eq!(md.quotient_canonicalize(&a).unwrap(), a);
        let on_axis = ModelPoint::new(vec![0.2], vec![0.6], vec![0.0, 0.0]);
        let c = md.quotient_canonicalize(&on_axis).unwrap();
        assert!(c.q[0] < 0.5 && c.xy == vec![0.0, 0.0]);
    }

    #[test]
    fn flip_without_translation_is_not_free() {
        let w = WilliamsonType::new(0, 1, 0, 1, 2).unwrap();
        let gen = GammaGenerator {
            flips: vec![true],
            translation: vec![0.0],
        };
        assert!(matches!(LinearModel::twisted(w, vec![gen]), Err(Error::ModelConstruction(_))));
    }

    #[test]
    fn irrational_translation_is_not_finite() {
        let w = WilliamsonType::new(0, 1, 0, 1, 2).unwrap();
        let gen = GammaGenerator {
            flips: vec![false],
            translation: vec![2f64.sqrt() - 1.0],
        };
        assert!(LinearModel::twisted(w, vec![gen]).is_err());
    }

    #[test]
    fn torus_flow_period_one() {
        let md = model(1, 0, 0, 1);
        let pt = ModelPoint::new(vec![0.1], vec![0.25], vec![0.2, 0.1]);
        let full = md.torus_action_flow(&[1.0], 1.0, &pt).unwrap();
        assert!((full.q[0] - 0.25).abs() < 1e-15);
        let half = md.torus_action_flow(&[1.0], 0.5, &pt).unwrap();
        assert!((half.q[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn torus_flow_matches_hamiltonian_flow() {
        use crate::flows::{flow, FieldSource};
        let md = model(1, 0, 0, 1);
        let f = FieldSource::parse("-(0.3*p1)", md.layout()).unwrap();
        let z = [0.1, 0.25, 0.2, 0.1];
        let w = flow(&f, 0.5, &z, 1e-12).unwrap();
        let pt = ModelPoint::from_flat(1, &z);
        let want = md.torus_action_flow(&[0.3], 0.5, &pt).unwrap();
        assert!((w[1] - want.q[0]).abs() < 1e-12);
    }

    #[test]
    fn structure_check_separates_maps() {
        use crate::flows::FieldSource;
        let md = model(1, 0, 0, 1);
        let grid = md.sample_grid(4);
        let mut a = md.identity_automorphism();
        a.torus_translation[0] = 0.3;
        a.elliptic_angles[0] = 0.7;
        let good = a.to_numeric_map().unwrap();
        let shear = NumericMap::flow(FieldSource::parse("-p1^2/2", md.layout()).unwrap(), 1.0, 1e-12);
        let r = verify_linear_action_structure(&md, &[good, shear], &grid, 1e-10).unwrap();
        assert!(r.maps[0].passed, "{:?}", r.maps[0]);
        assert!(!r.maps[1].passed);
        assert!((r.maps[1].translation_variation - 2.0 * md.radius_p).abs() < 1e-9);
    }

    #[test]
    fn descriptor_round_trip() {
        let d = ModelDescriptor {
            n: 2,
            m: 1,
            k_e: 0,
            k_h: 1,
            k_f: 0,
            gamma: vec![GammaGenerator {
                flips: vec![true],
                translation: vec![0.5],
            }],
            radius_p: 1.0,
            radius_xy: 1.0,
        };
        let text = serde_json::to_string(&d).unwrap();
        let back: ModelDescriptor = serde_json::from_str(&text).unwrap();
        let md = LinearModel::from_descriptor(&back).unwrap();
        assert_eq!(md.descriptor(), d);
    }
}
