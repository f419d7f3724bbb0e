use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and its verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular coefficient: {0}")]
    SingularCoefficient(String),

    #[error("numerical blow-up at step {step} (t = {time})")]
    NumericalBlowUp { step: usize, time: f64 },

    #[error("max steps ({max_steps}) exhausted at t = {time}")]
    MaxStepsExhausted { max_steps: usize, time: f64 },

    #[error("infeasible barrier placement: {0}")]
    Infeasible(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
