use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants fall into three families that the CLI maps onto exit codes:
/// input problems (shapes, parsing, configuration), numerical problems
/// (rank deficiency, degenerate data) and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at instance {instance}, time {time}, variable {variable}")]
    NonFinite {
        instance: usize,
        time: usize,
        variable: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("bad dimensions: need 1 <= k <= d, got d = {d}, k = {k}")]
    BadDimensions { d: usize, k: usize },

    #[error("history update needs a time counter j >= 2, got {0}")]
    BadCounter(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "rank-deficient iterate: |R[{column},{column}]| = {magnitude:e}; \
         the data cannot support this many components, try reducing K"
    )]
    RankDeficient { column: usize, magnitude: f64 },

    #[error("at time index {time}: {source}")]
    AtTime {
        time: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix columns are not orthonormal (||QᵀQ - I||_F = {0:e})")]
    NotOrthonormal(f64),

    #[error("dataset has zero Frobenius norm")]
    ZeroData,

    #[error("feature dimension mismatch: train has {train}, test has {test}")]
    DimensionMismatch { train: usize, test: usize },

    #[error("dataset has no class labels")]
    Unlabeled,

    #[error("missing cell for instance {instance}, time {time}")]
    MissingCell { instance: i64, time: i64 },

    #[error("duplicate cell for instance {instance}, time {time} (line {line})")]
    DuplicateCell { instance: i64, time: i64, line: u64 },

    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("instance {0} carries more than one label")]
    InconsistentLabel(i64),

    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),

    #[error("missing metadata: {0}")]
    MetadataMissing(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures that come from the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. } | Error::NotOrthonormal(_) | Error::ZeroData => true,
            Error::AtTime { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_time(self, time: usize) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime {
                time,
                source: Box::new(e),
            },
        }
    }
}
