use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in `{tensor}`: expected {expected}, got {actual}")]
    Shape {
        tensor: String,
        expected: String,
        actual: String,
    },
    #[error("mask entry {name}[{row}][{col}] = {value} is not binary")]
    NonBinaryMask {
        name: &'static str,
        row: usize,
        col: usize,
        value: u8,
    },
    #[error("invalid model dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric failure at {context}")]
    Numeric { context: String },
    #[error("point {point:?} lies outside the reference box {reference:?}")]
    OutsideReference { point: [f64; 2], reference: [f64; 2] },
    #[error("negative hypervolume regret {0}: reference hypervolume is smaller than the archive's")]
    NegativeRegret(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("output path {0} already exists (use --force to overwrite)")]
    OutputExists(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonBinaryMask { .. } => "non_binary_mask",
            Error::InvalidDims(_) => "invalid_dims",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Numeric { .. } => "numeric",
            Error::OutsideReference { .. } => "outside_reference",
            Error::NegativeRegret(_) => "negative_regret",
            Error::Checkpoint(_) => "checkpoint",
            Error::MissingInput(_) => "missing_input",
            Error::OutputExists(_) => "output_exists",
            Error::Evaluation(_) => "evaluation",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn shape(tensor: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            tensor: tensor.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
