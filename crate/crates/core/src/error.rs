use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Step 1 found no eigenvalue gap of at least `delta`.
    #[error(
        "no eigenvalue gap >= {delta:e} among {count} eigenvalues (largest gap {largest_gap:e}); \
         lower delta or set k1 explicitly"
    )]
    NoGap {
        delta: f64,
        largest_gap: f64,
        count: usize,
    },

    #[error("packing infeasible: max pairwise weighted cost {achieved:e} exceeds limit {limit:e}")]
    PackingInfeasible { achieved: f64, limit: f64 },

    #[error("fill infeasible at column {column}: best tail mass {tail_mass:e} exceeds budget {budget:e}")]
    FillInfeasible {
        column: usize,
        tail_mass: f64,
        budget: f64,
    },

    #[error("{method} did not converge within {iterations} iterations")]
    NonConvergence { method: String, iterations: usize },

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Numerical failures as opposed to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoGap { .. }
                | Error::PackingInfeasible { .. }
                | Error::FillInfeasible { .. }
                | Error::NonConvergence { .. }
        )
    }

    /// Short machine-readable tag used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::NoGap { .. } => "no-gap",
            Error::PackingInfeasible { .. } => "packing-infeasible",
            Error::FillInfeasible { .. } => "fill-infeasible",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
