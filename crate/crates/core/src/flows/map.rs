//! Diffeomorphisms of phase space as pipelines of primitive maps.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Dual, Layout, Scalar};
use crate::linalg;

use super::field::FieldSource;
use super::integrator::{integrate, IntegratorOptions};

/// One stage of a [`NumericMap`].
#[derive(Debug, Clone)]
pub enum Primitive {
    /// `z ↦ Mz + c`; `M` is symplectic.
    Affine {
        matrix: Arc<DMatrix<f64>>,
        inverse: Arc<DMatrix<f64>>,
        shift: Vec<f64>,
    },
    /// `z ↦ s z`. Conformally symplectic only; it appears in conjugations
    /// `δ_{1/t} ∘ φ ∘ δ_t`, whose overall symplecticity is checked instead.
    Scale(f64),
    /// Time-`time` map of a field.
    Flow {
        field: FieldSource,
        time: f64,
        tol: f64,
    },
}

impl Primitive {
    fn inverse(&self) -> Primitive {
        match self {
            Primitive::Affine {
                matrix,
                inverse,
                shift,
            } => {
                let back: Vec<f64> = (0..shift.len())
                    .map(|i| -(0..shift.len()).map(|k| inverse[(i, k)] * shift[k]).sum::<f64>())
                    .collect();
                Primitive::Affine {
                    matrix: inverse.clone(),
                    inverse: matrix.clone(),
                    shift: back,
                }
            }
            Primitive::Scale(s) => Primitive::Scale(1.0 / s),
            Primitive::Flow { field, time, tol } => Primitive::Flow {
                field: field.clone(),
                time: -time,
                tol: *tol,
            },
        }
    }

    fn apply<S: Scalar>(&self, z: &[S]) -> Result<Vec<S>> {
        match self {
            Primitive::Affine { matrix, shift, .. } => {
                let d = z.len();
                Ok((0..d)
                    .map(|i| {
                        let mut acc = S::cst(shift[i]);
                        for k in 0..d {
                            let m = matrix[(i, k)];
                            if m != 0.0 {
                                acc += z[k].scale(m);
                            }
                        }
                        acc
                    })
                    .collect())
            }
            Primitive::Scale(s) => Ok(z.iter().map(|v| v.scale(*s)).collect()),
            Primitive::Flow { field, time, tol } => {
                if *time == 0.0 || field.is_trivially_zero() {
                    return Ok(z.to_vec());
                }
                integrate(field.rhs(), z, *time, &IntegratorOptions::with_tol(*tol))
            }
        }
    }
}

/// Composition of primitives, applied first to last.
#[derive(Debug, Clone)]
pub struct NumericMap {
    dim: usize,
    steps: Vec<Primitive>,
}

impl NumericMap {
    pub fn identity(dim: usize) -> NumericMap {
        NumericMap {
            dim,
            steps: Vec::new(),
        }
    }

    /// Linear symplectic map; rejected when `‖MᵀJM − J‖ > 1e-9·(1 + ‖M‖²)`.
    pub fn linear(matrix: DMatrix<f64>) -> Result<NumericMap> {
        let d = matrix.nrows();
        NumericMap::affine(matrix, vec![0.0; d])
    }

    pub fn affine(matrix: DMatrix<f64>, shift: Vec<f64>) -> Result<NumericMap> {
        let d = matrix.nrows();
        if matrix.ncols() != d || !d.is_multiple_of(2) || shift.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: matrix.ncols().max(shift.len()),
            });
        }
        let res = linalg::symplectic_residual(&matrix);
        if res > 1e-9 * (1.0 + matrix.amax().powi(2)) {
            return Err(Error::Rejected(format!(
                "linear part is not symplectic (residual {res:e})"
            )));
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Rejected("singular matrix".into()))?;
        Ok(NumericMap {
            dim: d,
            steps: vec![Primitive::Affine {
                matrix: Arc::new(matrix),
                inverse: Arc::new(inverse),
                shift,
            }],
        })
    }

    pub fn scale(dim: usize, s: f64) -> NumericMap {
        NumericMap {
            dim,
            steps: vec![Primitive::Scale(s)],
        }
    }

    /// Time-`time` map of `field`, integrated to local tolerance `tol`.
    pub fn flow(field: FieldSource, time: f64, tol: f64) -> NumericMap {
        NumericMap {
            dim: field.dim(),
            steps: vec![Primitive::Flow { field, time, tol }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[Primitive] {
        &self.steps
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    /// `other ∘ self`: first `self`, then `other`.
    pub fn then(&self, other: &NumericMap) -> Result<NumericMap> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut steps = self.steps.clone();
        steps.extend(other.steps.iter().cloned());
        Ok(NumericMap { dim: self.dim, steps })
    }

    /// `self ∘ other`.
    pub fn after(&self, other: &NumericMap) -> Result<NumericMap> {
        other.then(self)
    }

    /// Composition of maps listed in application order.
    pub fn chain(maps: &[&NumericMap]) -> Result<NumericMap> {
        let dim = maps.first().map_or(0, |m| m.dim);
        maps.iter()
            .try_fold(NumericMap::identity(dim), |acc, m| acc.then(m))
    }

    pub fn inverse(&self) -> NumericMap {
        NumericMap {
            dim: self.dim,
            steps: self.steps.iter().rev().map(Primitive::inverse).collect(),
        }
    }

    /// `δ_{1/t} ∘ self ∘ δ_t`.
    pub fn conjugate_by_scale(&self, t: f64) -> NumericMap {
        let mut steps = Vec::with_capacity(self.steps.len() + 2);
        steps.push(Primitive::Scale(t));
        steps.extend(self.steps.iter().cloned());
        steps.push(Primitive::Scale(1.0 / t));
        NumericMap { dim: self.dim, steps }
    }

    pub fn eval<S: Scalar>(&self, z: &[S]) -> Result<Vec<S>> {
        if z.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: z.len(),
            });
        }
        let mut cur = z.to_vec();
        for p in &self.steps {
            cur = p.apply(&cur)?;
        }
        Ok(cur)
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.eval(z)
    }

    /// Jacobian at `z` by one forward-mode pass per column.
    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        let mut jac = DMatrix::zeros(d, d);
        let mut seed: Vec<Dual> = z.iter().map(|&v| Dual::constant(v)).collect();
        for c in 0..d {
            seed[c].du = 1.0;
            let out = self.eval(&seed)?;
            seed[c].du = 0.0;
            for r in 0..d {
                jac[(r, c)] = out[r].du;
            }
        }
        Ok(jac)
    }

    /// Value and Jacobian at `z`.
    pub fn value_and_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let d = self.dim;
        let mut jac = DMatrix::zeros(d, d);
        let mut value = Vec::new();
        let mut seed: Vec<Dual> = z.iter().map(|&v| Dual::constant(v)).collect();
        for c in 0..d {
            seed[c].du = 1.0;
            let out = self.eval(&seed)?;
            seed[c].du = 0.0;
            for r in 0..d {
                jac[(r, c)] = out[r].du;
            }
            if c == 0 {
                value = out.iter().map(|v| v.re).collect();
            }
        }
        Ok((value, jac))
    }

    /// `‖DφᵀJDφ − J‖_max` at `z`.
    pub fn symplectic_residual(&self, z: &[f64]) -> Result<f64> {
        Ok(linalg::symplectic_residual(&self.jacobian(z)?))
    }
}

/// JSON form of a map: a list of steps applied first to last.
///
/// ```json
/// {"steps": [{"kind": "flow", "hamiltonian": "flat_exp(x*y)", "time": -1.0},
///            {"kind": "matrix", "rows": [[-1, 0], [0, -1]]}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub steps: Vec<StepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSpec {
    Matrix {
        rows: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Vec<f64>>,
    },
    Scale {
        factor: f64,
    },
    Flow {
        hamiltonian: String,
        #[serde(default = "unit_time")]
        time: f64,
    },
    Inverse {
        steps: Vec<StepSpec>,
    },
}

fn unit_time() -> f64 {
    1.0
}

impl MapSpec {
    pub fn build(&self, layout: Layout, tol: f64) -> Result<NumericMap> {
        build_steps(&self.steps, layout, tol)
    }
}

fn build_steps(steps: &[StepSpec], layout: Layout, tol: f64) -> Result<NumericMap> {
    let d = layout.dim();
    let mut out = NumericMap::identity(d);
    for s in steps {
        let m = match s {
            StepSpec::Matrix { rows, shift } => {
                let a = linalg::from_rows(rows).ok_or(Error::Dimension {
                    expected: d,
                    found: rows.len(),
                })?;
                if a.nrows() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        found: a.nrows(),
                    });
                }
                NumericMap::affine(a, shift.clone().unwrap_or_else(|| vec![0.0; d]))?
            }
            StepSpec::Scale { factor } => NumericMap::scale(d, *factor),
            StepSpec::Flow { hamiltonian, time } => {
                NumericMap::flow(FieldSource::parse(hamiltonian, layout)?, *time, tol)
            }
            StepSpec::Inverse { steps } => build_steps(steps, layout, tol)?.inverse(),
        };
        out = out.then(&m)?;
    }
    Ok(out)
}
