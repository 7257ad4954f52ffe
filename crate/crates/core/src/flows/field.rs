//! Vector fields that can be integrated: Hamiltonian fields of expressions,
//! fields sampled from paths of maps, and linear combinations of these.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{HamiltonianExpr, Layout, Scalar};

use super::path::SampledField;

#[derive(Clone)]
pub enum FieldSource {
    /// `X_H = J ∇H`.
    Hamiltonian(HamiltonianExpr),
    /// Field recovered from a path of maps.
    Sampled(Arc<SampledField>),
    /// `Σ c_i X_i` over fields of one dimension.
    Sum(Vec<(f64, FieldSource)>),
}

impl fmt::Debug for FieldSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSource::Hamiltonian(h) => write!(f, "Hamiltonian({h})"),
            FieldSource::Sampled(s) => write!(f, "Sampled(dim {})", s.dim()),
            FieldSource::Sum(terms) => f.debug_list().entries(terms).finish(),
        }
    }
}

impl FieldSource {
    pub fn hamiltonian(h: HamiltonianExpr) -> FieldSource {
        FieldSource::Hamiltonian(h)
    }

    /// Parses `text` on `layout` and wraps its Hamiltonian field.
    pub fn parse(text: &str, layout: Layout) -> Result<FieldSource> {
        Ok(FieldSource::Hamiltonian(HamiltonianExpr::parse_on(text, layout)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            FieldSource::Hamiltonian(h) => h.dim(),
            FieldSource::Sampled(s) => s.dim(),
            FieldSource::Sum(terms) => terms.first().map_or(0, |(_, t)| t.dim()),
        }
    }

    /// The generating function when the field is an expression field.
    pub fn hamiltonian_expr(&self) -> Option<&HamiltonianExpr> {
        match self {
            FieldSource::Hamiltonian(h) => Some(h),
            _ => None,
        }
    }

    pub fn scaled(self, c: f64) -> FieldSource {
        match self {
            FieldSource::Hamiltonian(h) => FieldSource::Hamiltonian(h.scale(c)),
            other => FieldSource::Sum(vec![(c, other)]),
        }
    }

    /// `self + other`; symbolic when both are expression fields.
    pub fn plus(&self, other: &FieldSource) -> Result<FieldSource> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(match (self, other) {
            (FieldSource::Hamiltonian(a), FieldSource::Hamiltonian(b)) => {
                FieldSource::Hamiltonian(a.add(b)?)
            }
            _ => FieldSource::Sum(vec![(1.0, self.clone()), (1.0, other.clone())]),
        })
    }

    /// Whether the field is identically zero by construction.
    pub fn is_trivially_zero(&self) -> bool {
        match self {
            FieldSource::Hamiltonian(h) => h.expr().is_zero(),
            FieldSource::Sampled(s) => s.is_trivially_zero(),
            FieldSource::Sum(terms) => terms
                .iter()
                .all(|(c, t)| *c == 0.0 || t.is_trivially_zero()),
        }
    }

    /// Evaluates the field at `z` into `out`.
    pub fn eval_into<S: Scalar>(&self, z: &[S], out: &mut [S]) {
        match self {
            FieldSource::Hamiltonian(h) => {
                let mut scratch = Vec::new();
                h.field_program().eval_into(z, out, &mut scratch);
            }
            FieldSource::Sampled(s) => s.eval_into(z, out),
            FieldSource::Sum(terms) => {
                out.iter_mut().for_each(|o| *o = S::cst(0.0));
                let mut buf = vec![S::cst(0.0); out.len()];
                for (c, t) in terms {
                    if *c == 0.0 {
                        continue;
                    }
                    t.eval_into(z, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += b.scale(*c);
                    }
                }
            }
        }
    }

    pub fn eval<S: Scalar>(&self, z: &[S]) -> Vec<S> {
        let mut out = vec![S::cst(0.0); z.len()];
        self.eval_into(z, &mut out);
        out
    }

    /// A right-hand side closure for the integrator with reusable scratch.
    pub(crate) fn rhs<S: Scalar>(&self) -> impl FnMut(&[S], &mut [S]) + '_ {
        let mut scratch: Vec<S> = Vec::new();
        move |z: &[S], out: &mut [S]| match self {
            FieldSource::Hamiltonian(h) => h.field_program().eval_into(z, out, &mut scratch),
            other => other.eval_into(z, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_expression_fields_is_symbolic() {
        let a = FieldSource::parse("x1^2 + y1^2", Layout::fiber(1)).unwrap();
        let b = FieldSource::parse("x1*y1", Layout::fiber(1)).unwrap();
        let s = a.plus(&b).unwrap();
        assert!(matches!(s, FieldSource::Hamiltonian(_)));
        let z = [0.3, -0.4];
        let want: Vec<f64> = a.eval(&z).iter().zip(b.eval(&z)).map(|(u, v)| u + v).collect();
        assert_eq!(s.eval(&z), want);
    }

    #[test]
    fn scaled_generic_sum() {
        let a = FieldSource::parse("x1*y1", Layout::fiber(1)).unwrap();
        let s = FieldSource::Sum(vec![(0.5, a.clone()), (0.5, a.clone())]);
        assert_eq!(s.eval(&[1.0, 2.0]), a.eval(&[1.0, 2.0]));
    }
}
