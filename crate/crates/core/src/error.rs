use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("multi-index has total degree {got}, expected {expected}")]
    DegreeMismatch { expected: u32, got: u32 },

    #[error("vector is not of unit norm (|x| = {norm})")]
    NotUnit { norm: f64 },

    #[error("jet has the wrong scale: expected {expected}")]
    WrongScale { expected: &'static str },

    #[error("covariance is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("point is not transverse: smallest singular value {sigma_min:e} vs largest {sigma_max:e}")]
    NotTransverse { sigma_min: f64, sigma_max: f64 },

    #[error("vector does not lie in ker S (residual {residual:e})")]
    NotInKernel { residual: f64 },

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
