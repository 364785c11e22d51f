use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: expected {expected} bytes of sample data, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("non-finite sample at offset {offset}")]
    NonFiniteSample { offset: usize },

    #[error("invalid stack: {0}")]
    InvalidStack(String),

    #[error("{path}: {reason} at row {row}, column {col}")]
    InvalidCell {
        path: PathBuf,
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("{path}: {reason}")]
    MalformedCsv { path: PathBuf, reason: String },

    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("section {section} has zero intensity variance{}", block_suffix(*.block))]
    ZeroVariance {
        section: usize,
        block: Option<(usize, usize)>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("decay curve has no samples within the comparison band")]
    EmptyCurve,

    #[error("section {section} has no computed similarity pairs")]
    NoPairs { section: usize },

    #[error("coordinates collapsed (span {span:e} before renormalization)")]
    DegenerateCollapse { span: f64 },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

fn block_suffix(block: Option<(usize, usize)>) -> String {
    match block {
        Some((bx, by)) => format!(" in block ({bx}, {by})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical procedure itself, as opposed to
    /// bad input data or I/O.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::EmptyCurve | Error::DegenerateCollapse { .. } => true,
            Error::Iteration { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
