use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimensionMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dropout rate must satisfy 0 <= rate < 1, got {0}")]
    InvalidDropout(f64),

    #[error("target is not one-hot: {0}")]
    NotOneHot(String),

    #[error("missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("parse error at row {row}, column {column}: {value:?} is not a decimal number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),

    #[error("value {value} in column {column} outside [0, {max}]")]
    OutOfRange {
        column: String,
        value: f64,
        max: f64,
    },

    #[error("degenerate split: {n} rows with validation fraction {vs} gives {train} train / {validation} validation rows")]
    DegenerateSplit {
        n: usize,
        vs: f64,
        train: usize,
        validation: usize,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("model format version {found} is newer than supported version {supported}")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("model checksum mismatch: file says {expected}, contents hash to {actual}")]
    ChecksumMismatch { expected: String, actual: String },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    /// Stable short identifier, used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidDropout(_) => "invalid_dropout",
            Error::NotOneHot(_) => "not_one_hot",
            Error::MissingColumns(_) => "missing_columns",
            Error::Parse { .. } => "parse",
            Error::EmptyFile(_) => "empty_file",
            Error::OutOfRange { .. } => "out_of_range",
            Error::DegenerateSplit { .. } => "degenerate_split",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::ChecksumMismatch { .. } => "checksum_mismatch",
            Error::MalformedModel(_) => "malformed_model",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
