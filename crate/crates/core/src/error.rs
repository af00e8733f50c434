use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("series `{0}` has no non-zero value")]
    AllZeroSeries(String),
    #[error("value {value} at position {index} is outside the open interval (0, 1)")]
    DomainError { index: usize, value: f64 },
    #[error("series of length {len} is too short (needs more than {needed})")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("division by near-zero value at week {week}")]
    DivisionByNearZero { week: i64 },
    #[error("cycle mismatch: {left} vs {right}")]
    CycleMismatch { left: usize, right: usize },
    #[error("only {len} overlapping points (need at least {needed})")]
    InsufficientOverlap { len: usize, needed: usize },
    #[error("candidate corpus is empty")]
    EmptyCorpus,
    #[error("design column {column} is constant")]
    DegenerateDesign { column: usize },
    #[error("shape mismatch: expected {expected} columns, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("{rows} rows cannot support {folds} folds with {features} features")]
    TooFewRows { rows: usize, folds: usize, features: usize },
    #[error("non-finite value in regression input")]
    NonFiniteInput,
    #[error("ranked list is empty")]
    EmptyRankedList,
    #[error("candidate `{0}` is not in the corpus")]
    MissingCandidate(String),
    #[error("candidate `{id}` has no data for week {week}")]
    InsufficientHistory { id: String, week: i64 },
    #[error("malformed file: {0}")]
    FormatError(String),
    #[error("unsupported model file version {0}")]
    VersionMismatch(u32),
    #[error("parse error on line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("rate out of [0, 1] on line {line}")]
    RangeError { line: u64 },
    #[error("duplicate term id `{0}`")]
    DuplicateId(String),
    #[error("split leaves {train} training and {test} test weeks (cycle {cycle})")]
    DegenerateSplit { train: usize, test: usize, cycle: usize },
    #[error("invalid planted spec: {0}")]
    InvalidSpec(String),
    #[error("no label for selected term `{0}`")]
    MissingLabel(String),
    #[error("relevance ratio of an empty selection is undefined")]
    UndefinedRatio,
    #[error("forecast and actual are both zero at index {0}")]
    BothZero(usize),
    #[error("prediction and actual series share no week")]
    NoOverlap,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Variant name, used in CLI error lines and skip logs.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::AllZeroSeries(_) => "AllZeroSeries",
            Error::DomainError { .. } => "DomainError",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::DivisionByNearZero { .. } => "DivisionByNearZero",
            Error::CycleMismatch { .. } => "CycleMismatch",
            Error::InsufficientOverlap { .. } => "InsufficientOverlap",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::DegenerateDesign { .. } => "DegenerateDesign",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::EmptyRankedList => "EmptyRankedList",
            Error::MissingCandidate(_) => "MissingCandidate",
            Error::InsufficientHistory { .. } => "InsufficientHistory",
            Error::FormatError(_) => "FormatError",
            Error::VersionMismatch(_) => "VersionMismatch",
            Error::ParseError { .. } => "ParseError",
            Error::RangeError { .. } => "RangeError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::DegenerateSplit { .. } => "DegenerateSplit",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::MissingLabel(_) => "MissingLabel",
            Error::UndefinedRatio => "UndefinedRatio",
            Error::BothZero(_) => "BothZero",
            Error::NoOverlap => "NoOverlap",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
