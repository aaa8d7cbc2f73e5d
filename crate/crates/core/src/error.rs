use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance factorization failed: {0}")]
    Decomposition(String),

    #[error("covariance is ill-conditioned: {0}")]
    Conditioning(String),

    #[error("regression failed: {0}")]
    Fitting(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("non-finite cost {value} for sample {sample} at iteration {iteration}")]
    NonFiniteCost {
        iteration: usize,
        sample: usize,
        value: f64,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
