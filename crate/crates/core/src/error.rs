use thiserror::Error;

/// Errors raised by measure construction and the numerical experiments.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A query or fit was requested below the generation scale of a measure.
    #[error("resolution exceeded: requested scale {requested:e} is below the generation scale {gen_scale:e}")]
    ResolutionExceeded { requested: f64, gen_scale: f64 },

    #[error("empty restriction: no mass inside the ball")]
    EmptyRestriction,

    #[error("empty slice: no mass within the tube")]
    EmptySlice,

    #[error("dimension mismatch: expected ambient dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("point cap exceeded: {requested} points requested, cap is {cap}; {hint}")]
    CapExceeded {
        requested: u128,
        cap: usize,
        hint: &'static str,
    },

    #[error("calibrate first: the Fourier-side constant is not set")]
    Uncalibrated,

    #[error("insufficient scales: {found} dyadic scales in range, need at least {needed}")]
    InsufficientScales { found: usize, needed: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        LabError::InvalidArgument(msg.into())
    }
}
