use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("matrix is singular or not positive definite")]
    Singular,

    /// The received pilot vector has (numerically) zero energy, so the
    /// feedback gain cannot be formed.
    #[error("degenerate pilot observation (|y|^2 = {0:e})")]
    DegenerateObservation(f64),

    /// The channel matrix handed to a precoder is rank deficient or too
    /// badly conditioned to invert.
    #[error("degenerate precoder input (condition number {0:e})")]
    DegeneratePrecoder(f64),

    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("config error: {0}")]
    Config(String),

    #[error("scenario file error: {0}")]
    ScenarioFile(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
