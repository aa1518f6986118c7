use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("coefficient certification failed: {0}")]
    Certification(String),

    #[error("numerical instability in {term} at t = {time}")]
    Instability { term: &'static str, time: f64 },

    #[error("gradient modulus {found:.4} exceeds the configured cap {cap:.4} at t = {time}")]
    GradientCap { found: f64, cap: f64, time: f64 },

    #[error("singular Poisson system: right-hand side mean {mean:e} is not compatible")]
    SingularPoisson { mean: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("effective law table does not cover {} lattice node(s), first {:?}", .missing.len(), .missing.first())]
    Coverage { missing: Vec<[i64; 4]> },

    #[error("property violation: {0}")]
    PropertyViolation(String),

    #[error("every run of the study failed: {0}")]
    StudyFailed(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error reports a violated mathematical property rather
    /// than a failure to compute.
    pub fn is_property_violation(&self) -> bool {
        matches!(self, Error::PropertyViolation(_) | Error::Certification(_))
    }
}
