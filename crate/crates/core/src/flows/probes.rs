//! Deterministic quasi-random probe points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `i`-th element of the van der Corput sequence in base `b`.
pub fn radical_inverse(mut i: u64, b: u32) -> f64 {
    let b = b as u64;
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Axis-aligned box in phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Region> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Precondition("region bounds must satisfy lo <= hi".into()));
        }
        Ok(Region { lo, hi })
    }

    /// `[-r, r]^dim`.
    pub fn cube(dim: usize, r: f64) -> Region {
        Region {
            lo: vec![-r; dim],
            hi: vec![r; dim],
        }
    }

    /// The same interval in every coordinate.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Region {
        Region {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// First `count` Halton points (skipping the origin of the sequence).
    pub fn halton(&self, count: usize) -> Vec<Vec<f64>> {
        self.halton_filtered(count, |_| true)
    }

    /// Halton points accepted by `keep`, in sequence order. Gives up after
    /// `1000·count` candidates.
    pub fn halton_filtered(&self, count: usize, keep: impl Fn(&[f64]) -> bool) -> Vec<Vec<f64>> {
        let d = self.dim();
        assert!(d <= PRIMES.len(), "Halton sequence limited to {} dimensions", PRIMES.len());
        let mut out = Vec::with_capacity(count);
        let mut i = 1u64;
        while out.len() < count && i <= 1000 * count as u64 + 1 {
            let z: Vec<f64> = (0..d)
                .map(|k| self.lo[k] + (self.hi[k] - self.lo[k]) * radical_inverse(i, PRIMES[k]))
                .collect();
            if keep(&z) {
                out.push(z);
            }
            i += 1;
        }
        out
    }

    /// Tensor grid with `per_axis` points per coordinate (endpoints
    /// included; a single point sits at the center).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let per = per_axis.max(1);
        let total = per.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let j = idx % per;
                        idx /= per;
                        if per == 1 {
                            0.5 * (self.lo[k] + self.hi[k])
                        } else {
                            self.lo[k] + (self.hi[k] - self.lo[k]) * j as f64 / (per - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_der_corput_base_two() {
        let v: Vec<f64> = (1..5).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn halton_points_lie_in_region() {
        let r = Region::new(vec![0.1, 0.1], vec![1.0, 1.0]).unwrap();
        let pts = r.halton(25);
        assert_eq!(pts.len(), 25);
        assert!(pts.iter().all(|p| r.contains(p)));
    }

    #[test]
    fn grid_has_endpoints() {
        let g = Region::cube(2, 1.0).grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![-1.0, -1.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }
}
