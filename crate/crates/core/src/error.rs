use thiserror::Error;

/// Errors raised by the valuation engines.
#[derive(Debug, Error)]
pub enum CocmError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested combination of risk measure, utility and model has no
    /// implemented evaluation route.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A covariance matrix is malformed or not positive definite.
    #[error("matrix error: {0}")]
    Matrix(String),

    /// A computation would exceed a configured size limit.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A numerical invariant was violated beyond tolerance.
    #[error("internal numerical error: {0}")]
    Internal(String),

    /// Malformed input data (trees, CSV files, distributions).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CocmError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        CocmError::Domain(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        CocmError::Unsupported(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CocmError::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller's configuration rather than by
    /// the numerics (used by the CLI to pick an exit code).
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            CocmError::Domain(_)
                | CocmError::Unsupported(_)
                | CocmError::InvalidInput(_)
                | CocmError::Io(_)
                | CocmError::Json(_)
                | CocmError::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CocmError>;
