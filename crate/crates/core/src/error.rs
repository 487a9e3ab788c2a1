use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("sequence timing infeasible: {0}")]
    InfeasibleTiming(String),

    #[error("step size {tau:e} s at t = {t:e} s fell below the minimum {min:e} s")]
    StepSizeTooSmall { t: f64, tau: f64, min: f64 },

    #[error("step failure at t = {t:e} s: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("non-finite rate in cell {cell} at t = {t:e} s")]
    NonFiniteCell { cell: usize, t: f64 },

    #[error("signal region is empty or outside the mesh")]
    EmptyRegion,

    #[error("frame {frame} has {got} samples, expected {expected}")]
    RaggedFrames { frame: usize, got: usize, expected: usize },

    #[error("normalization reference is zero or not finite")]
    ZeroReference,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.into(), reason: reason.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
