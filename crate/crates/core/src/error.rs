use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
///
/// Row and column numbers in parse errors are 1-based and count physical
/// lines of the file (a header line, if present, is line 1).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("row {row}, column {col}: not a finite number")]
    NonNumericField { row: usize, col: usize },
    #[error("malformed record at row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("bandwidth must be positive and finite, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("edges contain a cycle")]
    CycleDetected,
    #[error("edge ({0}, {1}) is not in the graph")]
    EdgeNotInGraph(usize, usize),
    #[error("graph has a node with zero total similarity")]
    ZeroDegreeNode,

    #[error("an arm is empty")]
    EmptyArm,
    #[error("arm {arm} has {size} units, need at least {needed}")]
    ArmTooSmall { arm: u8, size: usize, needed: usize },
    #[error("unit {0} has no opposite-arm neighbor in the support graph")]
    IsolatedUnit(usize),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("estimator requires a {expected} design, got {found}")]
    WrongDesignKind { expected: String, found: String },
    #[error("rerandomization exceeded {0} draws without acceptance")]
    MaxDrawsExceeded(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration limited to {limit} nodes, got {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("numerical overflow or loss of positivity in log-determinant")]
    Overflow,

    #[error("unknown data-generating process: {0}")]
    UnknownDgp(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
