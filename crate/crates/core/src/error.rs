use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label {0:?}; accepted: {1}")]
    UnknownLabel(String, String),

    #[error("unknown facet {0:?}; accepted: When, How, Where")]
    UnknownFacet(String),

    #[error("{path}: line {line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),

    #[error("invalid url {0:?}")]
    InvalidUrl(String),

    #[error("line {line}: schema violation in field `{field}`: {reason}")]
    SchemaViolation {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("duplicate annotation for pair {pair_id} by annotator {annotator_id}")]
    DuplicateAnnotation {
        pair_id: String,
        annotator_id: String,
    },

    #[error("duplicate pair id {0}")]
    DuplicatePair(String),

    #[error("network failure fetching {url}: {reason}")]
    Network { url: String, reason: String },

    #[error("no fixture for image reference {0}")]
    MissingFixture(String),

    #[error("no precomputed feature for pair {0}")]
    MissingFeature(String),

    #[error("relation set has no primary relation")]
    EmptyPrimarySet,

    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite loss at {at}: {detail}")]
    NonFiniteLoss { at: String, detail: String },

    #[error("unknown pair id {0}")]
    UnknownPair(String),

    #[error("annotators cover different pair sets ({left} vs {right} pairs)")]
    CoverageMismatch { left: usize, right: usize },

    #[error("no references for candidate {0}")]
    EmptyReferences(String),

    #[error("insufficient annotators: {0}")]
    InsufficientAnnotators(String),

    #[error("overlap of {overlap} exceeds {pairs} pairs")]
    OverlapTooLarge { overlap: usize, pairs: usize },

    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),

    #[error("pair {pair_id} is not assigned to annotator {annotator_id}")]
    NotAssigned {
        pair_id: String,
        annotator_id: String,
    },

    #[error("pair {pair_id} already annotated by {annotator_id} with a different payload")]
    AlreadyAnnotated {
        pair_id: String,
        annotator_id: String,
    },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("empty checkpoint list")]
    EmptyCheckpoints,

    #[error("invalid config: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        }
    }

    /// Transient failures the caller may retry.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Network { .. })
    }
}
