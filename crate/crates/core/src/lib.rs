//! Numerical toolkit for nondegenerate singular orbits of integrable
//! Hamiltonian systems.
//!
//! The modules follow the data flow of the computations: linear symplectic
//! algebra and Williamson classification, linear models and their
//! automorphisms, expression-defined flows and the exponential map,
//! linearization of compact group actions by averaging, action variables
//! from period integrals, and a degenerate nonresonant example.

pub mod error;
pub mod linalg;
pub mod linear_models;
pub mod mineur_actions;
pub mod symplectic_linear;
pub mod expr;
pub mod flows;
pub mod equivariant_averaging;
pub mod counterexample_gen;
pub mod par;
pub mod cli;

pub use error::{Error, Result};
