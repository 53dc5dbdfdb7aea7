use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 2")]
    InvalidDimension(usize),

    #[error("index ({i}, {j}) out of range for dimension {dim}")]
    InvalidIndex { i: usize, j: usize, dim: usize },

    #[error("slot {slot} out of range for {len} subsystems")]
    SlotOutOfRange { slot: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-positive Josephson energy {0} GHz")]
    NonPositiveEj(f64),

    #[error("flux argument {0} (units of Φ0) leaves the modulation band |φ| < 0.5")]
    FluxOutOfBand(f64),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("operator is not Hermitian (relative defect {0:.3e})")]
    NonHermitian(f64),

    #[error("generator is not anti-Hermitian (relative defect {0:.3e})")]
    NotAntiHermitian(f64),

    #[error("tolerance not met: {0}")]
    Tolerance(String),

    #[error("dressed-state labeling failed: {0}")]
    Labeling(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
