use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{what}: bad magic bytes (expected {expected:?}, found {found:?})")]
    MagicMismatch {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("{what}: unsupported format version {version}")]
    UnsupportedVersion { what: &'static str, version: u32 },

    #[error("{what}: truncated or oversized payload ({detail})")]
    Malformed { what: &'static str, detail: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: u32, classes: usize },

    #[error("label count {labels} does not match embedding rows {rows}")]
    LabelCountMismatch { labels: usize, rows: usize },

    #[error("split `{split}` has invalid index {index} (rows = {rows}, or duplicated)")]
    BadSplitIndex { split: String, index: usize, rows: usize },

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("dataset has no `{0}` split")]
    UnknownSplit(String),

    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),

    #[error("requested {k} components but at most {max} are available")]
    RankTooLow { k: usize, max: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("class {0} is not in the dictionary")]
    UnknownClass(usize),

    #[error("train split is empty or has no class with at least two samples")]
    EmptyTrainSplit,

    #[error("count must be positive")]
    ZeroCount,

    #[error("K = {k} exceeds the {available} available dictionary classes")]
    KTooLarge { k: usize, available: usize },

    #[error("superclass {0} has no training samples to pool")]
    EmptyPool(usize),

    #[error("metric needs both correct and erroneous samples")]
    SingleClassOnly,

    #[error("metric needs at least one correct sample")]
    NoPositives,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.into())
        } else {
            Error::Io {
                path: path.into(),
                source,
            }
        }
    }
}
