use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("division by zero: {0}")]
    ZeroDenominator(String),
    #[error("placement failed: {0}")]
    Placement(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "not_found",
            Error::UnsupportedFormat { .. } => "unsupported_format",
            Error::Io { .. } => "io",
            Error::Codec { .. } => "codec",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::OutOfBounds(_) => "out_of_bounds",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidConfig(_) => "invalid_config",
            Error::ZeroDenominator(_) => "zero_denominator",
            Error::Placement(_) => "placement",
            Error::NonFinite(_) => "non_finite",
            Error::NoConvergence(_) => "no_convergence",
            Error::Checkpoint(_) => "checkpoint",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
