use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a formula (non-positive distance,
    /// zero rate, zero direct gain, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally valid but inconsistent configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The continuous rate lies below every element of the rate set.
    #[error("no admissible discrete rate at or below {rate} bps")]
    NoFeasibleRate { rate: f64 },

    /// An operation that needs a converged trace was handed an unconverged one.
    #[error("trace has not converged")]
    NotConverged,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
