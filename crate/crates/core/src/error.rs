use thiserror::Error;

/// Errors shared across the scoring pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid item parameters for {item_id}: {reason}")]
    InvalidItemParams { item_id: String, reason: String },

    #[error("invalid response matrix: {0}")]
    InvalidResponses(String),

    #[error("item {item_id} cannot be calibrated: {reason}")]
    ItemNotCalibratable { item_id: String, reason: String },

    #[error("invalid input: {0}")]
    Domain(String),

    #[error("dimension mismatch ({what}): expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("maximum likelihood estimate diverges: {0}")]
    MleDivergence(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("rank correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("missing features for person {person_id} on item {item_id}")]
    MissingFeatures { person_id: String, item_id: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("toy model validation failed: {0}")]
    ToyValidation(String),

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
