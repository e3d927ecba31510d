use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid shape {rows}x{cols} does not match vector length {len}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("zero vector where a nonzero one is required")]
    ZeroVector,

    #[error("index {index} out of range for size {size}")]
    OutOfRange { index: usize, size: usize },

    #[error("all training pairs are linearly dependent")]
    AllDependent,

    #[error("numerically singular system: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Io(_) | Error::Format(_) | Error::Json(_) => 4,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::ZeroVector => "zero_vector",
            Error::OutOfRange { .. } => "out_of_range",
            Error::AllDependent => "all_dependent",
            Error::Singular(_) => "singular",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ModelMismatch(_) => "model_mismatch",
            Error::NotConverged(_) => "not_converged",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
