use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A certificate precondition failed; `value` carries the offending
    /// eigenvalue (or eigenvalue real part) when one is available.
    #[error("certificate error: {message} (value {value:.6e})")]
    Certificate { message: String, value: f64 },

    #[error("system is not {window}-step strongly detectable: observability rank {rank} < {dim}")]
    NotStronglyDetectable { window: usize, rank: usize, dim: usize },

    #[error("non-finite state encountered at step {step}")]
    Divergence { step: usize },

    #[error("ill-posed feedback loop: {0}")]
    WellPosedness(String),

    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
