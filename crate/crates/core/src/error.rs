use thiserror::Error;

/// Errors raised by the SLAM toolkit.
#[derive(Debug, Error)]
pub enum SlamError {
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("angle undefined: {0}")]
    UndefinedAngle(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular innovation covariance")]
    SingularInnovation,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl SlamError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        SlamError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SlamError>;
