use thiserror::Error;

/// Errors produced by the estimation pipeline and its I/O layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is rank deficient: smallest singular value {smallest:e} vs largest {largest:e}")]
    RankDeficient { smallest: f64, largest: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("gradient vanished for direction(s) {directions:?}; the penalty is too large")]
    DeadGradient { directions: Vec<usize> },

    #[error("sparsity pattern column {direction} has no active entries")]
    EmptySupport { direction: usize },

    #[error("projected covariate for direction {direction} is constant")]
    DegenerateCovariate { direction: usize },

    #[error("did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {detail}")]
    Parse {
        row: usize,
        column: usize,
        detail: String,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable category name, used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::RankDeficient { .. } => "RankDeficient",
            Error::Dimension(_) => "DimensionError",
            Error::DeadGradient { .. } => "DeadGradient",
            Error::EmptySupport { .. } => "EmptySupport",
            Error::DegenerateCovariate { .. } => "DegenerateCovariate",
            Error::NotConverged { .. } => "NotConverged",
            Error::Config(_) => "ConfigError",
            Error::Parse { .. } => "ParseError",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::NonFinite { .. } => "NonFinite",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
