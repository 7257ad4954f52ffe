//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

/// Block-diagonal structure matrix `J` with blocks `[[0, 1], [-1, 0]]`.
pub fn j_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(2 * i, 2 * i + 1)] = 1.0;
        j[(2 * i + 1, 2 * i)] = -1.0;
    }
    j
}

/// `ω(u, v) = uᵀ J v` for interleaved coordinates.
pub fn omega(u: &[f64], v: &[f64]) -> f64 {
    u.chunks(2)
        .zip(v.chunks(2))
        .map(|(a, b)| a[0] * b[1] - a[1] * b[0])
        .sum()
}

/// `‖SᵀJS − J‖_max`.
pub fn symplectic_residual(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows() / 2;
    let j = j_matrix(n);
    (s.transpose() * &j * s - j).amax()
}

/// Random symmetric matrix with entries uniform in `[-scale, scale]`.
pub fn random_symmetric<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for k in i..dim {
            let v = rng.gen_range(-scale..=scale);
            a[(i, k)] = v;
            a[(k, i)] = v;
        }
    }
    a
}

/// Random symplectic matrix `exp(J·Sym)`.
pub fn random_symplectic<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    (j_matrix(n) * random_symmetric(2 * n, scale, rng)).exp()
}

const MAX_SWEEPS: usize = 10_000;

/// Eigenvalues by the Francis double-shift QR iteration on the Hessenberg
/// form. Every tenth sweep without deflation uses an exceptional shift;
/// spectra symmetric under `λ ↦ -λ` make the standard shifts useless.
pub fn eigenvalues(m: &DMatrix<f64>) -> crate::Result<Vec<Complex64>> {
    let dim = m.nrows();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut a = m.clone().hessenberg().h();
    hqr(&mut a).ok_or_else(|| {
        crate::Error::NumericalDegeneracy(format!("QR iteration did not converge for a {dim}x{dim} matrix"))
    })
}

fn hqr(a: &mut DMatrix<f64>) -> Option<Vec<Complex64>> {
    const MAX_ITS: usize = 300;
    const EXCEPTIONAL: [f64; 5] = [0.75, 1.31, 0.43, 1.87, 0.61];
    let n = a.nrows();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let sign = |x: f64, y: f64| if y >= 0.0 { x.abs() } else { -x.abs() };
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            let mut l = nu;
            while l >= 1 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() <= f64::EPSILON * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nu, nu)];
            if l == nu {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[(nu - 1, nu - 1)];
            let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    let lo = if z != 0.0 { x - w / z } else { x + z };
                    out[nu - 1] = Complex64::new(x + z, 0.0);
                    out[nu] = Complex64::new(lo, 0.0);
                } else {
                    out[nu - 1] = Complex64::new(x + p, -z);
                    out[nu] = Complex64::new(x + p, z);
                }
                nn -= 2;
                break;
            }
            if its == MAX_ITS {
                return None;
            }
            if its > 0 && its % 10 == 0 {
                t += x;
                for i in 0..=nu {
                    a[(i, i)] -= x;
                }
                let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                x = EXCEPTIONAL[(its / 10 - 1) % EXCEPTIONAL.len()] * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let (mut p, mut q, mut r);
            let mut m = nu - 2;
            loop {
                let z = a[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - rr - ss;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k + 1 != nu { a[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                        if k + 1 != nu {
                            pp += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pp * z;
                        }
                        a[(k + 1, j)] -= pp * y;
                        a[(k, j)] -= pp * x;
                    }
                    let mmin = nu.min(k + 3);
                    for i in l..=mmin {
                        let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k + 1 != nu {
                            pp += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pp * r;
                        }
                        a[(i, k + 1)] -= pp * q;
                        a[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Some(out)
}

pub fn bounded_svd<T: nalgebra::ComplexField<RealField = f64>>(
    m: DMatrix<T>,
    u: bool,
    v: bool,
) -> crate::Result<nalgebra::SVD<T, nalgebra::Dyn, nalgebra::Dyn>> {
    nalgebra::SVD::try_new(m, u, v, f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| crate::Error::NumericalDegeneracy("SVD did not converge".into()))
}

/// Unit vector spanning the numerical kernel of `B − λI`, taken from the
/// smallest singular value. Returns it with the smallest and second
/// smallest singular values.
pub fn complex_null_vector(b: &DMatrix<f64>, lambda: Complex64) -> crate::Result<(DVector<Complex64>, f64, f64)> {
    let dim = b.nrows();
    let m = DMatrix::from_fn(dim, dim, |i, k| {
        Complex64::new(b[(i, k)], 0.0) - if i == k { lambda } else { Complex64::new(0.0, 0.0) }
    });
    let svd = bounded_svd(m, false, true)?;
    let vt = svd.v_t.expect("requested right singular vectors");
    let (imin, smin) = argmin(svd.singular_values.as_slice());
    let second = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != imin)
        .map(|(_, s)| *s)
        .fold(f64::INFINITY, f64::min);
    let v = vt.row(imin).transpose().map(|c| c.conj());
    Ok((v, smin, second))
}

/// Number of singular values of `B − λI` below `threshold`.
pub fn complex_nullity(b: &DMatrix<f64>, lambda: Complex64, threshold: f64) -> crate::Result<usize> {
    let dim = b.nrows();
    let m = DMatrix::from_fn(dim, dim, |i, k| {
        Complex64::new(b[(i, k)], 0.0) - if i == k { lambda } else { Complex64::new(0.0, 0.0) }
    });
    let sv = bounded_svd(m, false, false)?.singular_values;
    Ok(sv.iter().filter(|s| **s < threshold).count())
}

/// Real null vector of `B − μI` for real `μ`.
pub fn real_null_vector(b: &DMatrix<f64>, mu: f64) -> crate::Result<DVector<f64>> {
    let dim = b.nrows();
    let m = b - DMatrix::identity(dim, dim) * mu;
    let svd = bounded_svd(m, false, true)?;
    let vt = svd.v_t.expect("requested right singular vectors");
    let (imin, _) = argmin(svd.singular_values.as_slice());
    Ok(vt.row(imin).transpose())
}

fn argmin(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
}

/// Numerical rank with relative threshold.
pub fn rank(m: &DMatrix<f64>, rel: f64) -> crate::Result<usize> {
    let sv = bounded_svd(m.clone(), false, false)?.singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|s| **s > rel * top).count())
}

/// Converts nested rows into a matrix, checking the shape.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, k| rows[i][k]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|k| m[(i, k)]).collect())
        .collect()
}
