use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DmsegError>;

#[derive(Debug, Error)]
pub enum DmsegError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: line {line}, column {column}: missing value")]
    MissingValue {
        path: PathBuf,
        line: usize,
        column: usize,
    },

    #[error("{path}: line {line}, column {column}: value {value} outside the open interval (0, 1)")]
    OutOfRange {
        path: PathBuf,
        line: usize,
        column: usize,
        value: f64,
    },

    #[error("beta value {0} outside the open interval (0, 1)")]
    BetaOutOfRange(f64),

    #[error("duplicate {kind} id '{id}'")]
    DuplicateId { kind: &'static str, id: String },

    #[error("probe '{probe}' has non-positive position {position}")]
    NonPositivePosition { probe: String, position: i64 },

    #[error("probes '{first}' and '{second}' share position {chromosome}:{position}")]
    DuplicatePosition {
        first: String,
        second: String,
        chromosome: String,
        position: u64,
    },

    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: PathBuf, column: String },

    #[error("group column '{column}' has {levels} distinct values, expected 2")]
    NonBinaryGroup { column: String, levels: usize },

    #[error("group '{label}' has {count} sample(s), at least 2 required")]
    SingletonGroup { label: String, count: usize },

    #[error("case label '{0}' is not a level of the group column")]
    UnknownCaseLabel(String),

    #[error("covariate '{0}' is constant across samples")]
    ConstantCovariate(String),

    #[error("matrix row '{0}' is not in the manifest")]
    UnknownProbe(String),

    #[error("sample '{0}' is in the phenotype table but not in the matrix")]
    MissingSample(String),

    #[error("matrix column '{0}' is not in the phenotype table")]
    UnknownSample(String),

    #[error("{needed} samples required, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("operation requires M-values but data are on the beta scale")]
    ScaleMismatch,

    #[error("variance {0} at position {1} is not strictly positive")]
    NonPositiveVariance(f64, usize),

    #[error("null pool is empty")]
    EmptyPool,

    #[error("invalid permutation plan: {0}")]
    InvalidPlan(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown segment '{0}'")]
    UnknownSegment(String),
}

impl DmsegError {
    /// Stable short name used in machine-readable error lines and FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            DmsegError::Io { .. } => "Io",
            DmsegError::Parse { .. } => "ParseError",
            DmsegError::MissingValue { .. } => "MissingValue",
            DmsegError::OutOfRange { .. } | DmsegError::BetaOutOfRange(_) => "OutOfRange",
            DmsegError::DuplicateId { .. } => "DuplicateId",
            DmsegError::NonPositivePosition { .. } => "NonPositivePosition",
            DmsegError::DuplicatePosition { .. } => "DuplicatePosition",
            DmsegError::MissingColumn { .. } => "MissingColumn",
            DmsegError::NonBinaryGroup { .. } => "NonBinaryGroup",
            DmsegError::SingletonGroup { .. } => "SingletonGroup",
            DmsegError::UnknownCaseLabel(_) => "UnknownCaseLabel",
            DmsegError::ConstantCovariate(_) => "ConstantCovariate",
            DmsegError::UnknownProbe(_) => "UnknownProbe",
            DmsegError::MissingSample(_) => "MissingSample",
            DmsegError::UnknownSample(_) => "UnknownSample",
            DmsegError::TooFewSamples { .. } => "TooFewSamples",
            DmsegError::RankDeficient(_) => "RankDeficient",
            DmsegError::ScaleMismatch => "ScaleMismatch",
            DmsegError::NonPositiveVariance(..) => "NonPositiveVariance",
            DmsegError::EmptyPool => "EmptyPool",
            DmsegError::InvalidPlan(_) => "InvalidPlan",
            DmsegError::InvalidConfig(_) => "InvalidConfig",
            DmsegError::UnknownSegment(_) => "UnknownSegment",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DmsegError::Io {
            path: path.into(),
            source,
        }
    }
}
