use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {cell}: signed area {area:e}")]
    DegenerateTriangle { cell: usize, area: f64 },

    #[error("non-positive Jacobian determinant {det:e} on cell {cell}")]
    NonPositiveDeterminant { cell: usize, det: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dof {dof} is not a boundary dof and cannot carry a Dirichlet value")]
    NotBoundaryDof { dof: usize },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("conjugate gradient breakdown at iteration {iteration}: {reason}")]
    SolverBreakdown { iteration: usize, reason: String },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverNotConverged { iterations: usize, residual: f64 },

    #[error("active-set iteration cap {iterations} exceeded (largest KKT violation {violation:e})")]
    ActiveSetCap { iterations: usize, violation: f64 },

    #[error("line search failed in Gauss-Newton iteration {iteration} (functional {functional:e})")]
    LineSearch { iteration: usize, functional: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
