use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported scheme order {0}: expected 2 or 4")]
    InvalidOrder(u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid configuration for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("multigrid did not converge after {cycles} V-cycles (relative residual {residual:.3e})")]
    SolverNotConverged { cycles: usize, residual: f64 },

    #[error("too few amplitude peaks in the fit window: found {found}, need {needed}")]
    TooFewPeaks { found: usize, needed: usize },

    #[error("meshes are not nested: {0}")]
    NonNestedMeshes(String),

    #[error("convergence order undefined for errors {coarse:e} and {fine:e}")]
    UndefinedOrder { coarse: f64, fine: f64 },

    #[error("convergence ladder needs at least {needed} levels, got {got}")]
    InsufficientLadder { got: usize, needed: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
