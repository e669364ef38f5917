//! Crate-wide error type.

/// Errors produced by the slicing simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input outside the domain of an operation (bad parameter, violated
    /// precondition).
    #[error("domain error: {0}")]
    Domain(String),

    /// Auction round with no usable bids (e.g. all bids zero).
    #[error("degenerate auction: {0}")]
    Degenerate(String),

    /// A numerical procedure failed to converge or lost its bracket.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Scenario file could not be loaded or violates an invariant.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Experiment-level failure (too many failed trials, bad request).
    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn scenario(msg: impl Into<String>) -> Self {
        Error::Scenario(msg.into())
    }
}
