use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("regulator equations are infeasible (residual {residual:.3e})")]
    InfeasibleRegulation { residual: f64 },

    #[error("stabilizing gain design failed: {0}")]
    DesignFailure(String),

    #[error("utility matrix has a trivial kernel; only the zero distortion preserves it")]
    TrivialUtilityKernel,

    #[error(
        "no reachable utility-neutral distortion found after {attempts} draws (best residual {residual:.3e})"
    )]
    InfeasibleInvariance { residual: f64, attempts: usize },

    #[error("data is inconsistent with the mode (residual {residual:.3e})")]
    InconsistentData { residual: f64 },

    #[error("mode is not observable; state cannot be reconstructed from outputs")]
    Unobservable,

    #[error("horizon exhausted: step {step} requested but horizon is {horizon}")]
    HorizonExhausted { step: usize, horizon: usize },

    #[error("numerical failure: {0}")]
    Numerical(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
