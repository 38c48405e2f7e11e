use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time index {index} has no neighbours in a series of length {len}")]
    BoundaryTimeIndex { index: usize, len: usize },

    #[error("blow-up at t = {t}: |value| = {value:e} exceeds {limit:e}")]
    BlowUp { t: f64, value: f64, limit: f64 },

    #[error("time step {dt} violates the advisory CFL bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("trajectories are not time-aligned: {0}")]
    Misaligned(String),

    #[error("missing derivative data: {0}")]
    MissingDerivative(&'static str),

    #[error("law {law} requires {requirement}")]
    LawCondition { law: String, requirement: String },

    #[error("unknown law `{0}`")]
    UnknownLaw(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}
