use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] curvlab::Error),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("could not start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration and regime errors, 3 for numerical failures,
    /// 1 for anything else.
    pub fn exit_code(&self) -> u8 {
        use curvlab::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidDims(_) | E::DegreeMismatch { .. } | E::Regime(_) | E::InsufficientSamples(_)) => 2,
            CliError::Core(E::Csv(_)) => 1,
            CliError::Core(_) => 3,
            CliError::Io { .. } | CliError::Pool(_) | CliError::Json(_) => 1,
        }
    }
}
