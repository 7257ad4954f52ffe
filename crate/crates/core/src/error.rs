use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("family has {found} members, expected {expected}")]
    Arity { expected: usize, found: usize },

    #[error("degenerate family: {0}")]
    Nondegeneracy(String),

    #[error("classification unstable across random draws: {0}")]
    Instability(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("point outside model domain: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    ModelConstruction(String),

    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),

    #[error("trajectory left the domain at t = {time}")]
    Escape { time: f64 },

    #[error("step size underflow at t = {time}")]
    Stiffness { time: f64 },

    #[error("field is not tangent to the fibration: bracket residual {residual:e} > {threshold:e}")]
    NotInAlgebra { residual: f64, threshold: f64 },

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unsupported path: {0}")]
    UnsupportedPath(String),

    #[error("cycle did not close: {0}")]
    OpenCycle(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("periodic orbit not found: {0}")]
    NotFound(String),
}

pub type Result<T> = std::result::Result<T, Error>;
