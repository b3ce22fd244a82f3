use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in the pipeline.
///
/// Variants are grouped by how the CLI reports them: see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}{}: malformed record: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Malformed {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("duplicate {kind} id {id:?} in {scope}")]
    DuplicateId {
        kind: &'static str,
        id: String,
        scope: String,
    },

    #[error("unknown label {label:?} referenced by example {example:?} in dataset {dataset:?}")]
    UnknownLabel {
        dataset: String,
        example: String,
        label: String,
    },

    #[error("undescribed label {label:?} in dataset {dataset:?} (no descriptions and not marked null)")]
    UndescribedLabel { dataset: String, label: String },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),

    #[error("unknown description {description:?} in dataset {dataset:?}")]
    UnknownDescription { dataset: String, description: String },

    #[error("need at least 2 datasets to build splits, corpus has {0}")]
    TooFewDatasets(usize),

    #[error("empty training set when evaluating on {eval:?}")]
    EmptyTrainingSet { eval: String },

    #[error("empty training pool: no training dataset has a description with examples")]
    EmptyTrainingPool,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("single-class input: {positives} positives, {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },

    #[error("empty intersection: the compared tables share no description")]
    EmptyIntersection,

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient points for Kendall tau: {0}")]
    InsufficientPoints(usize),

    #[error("Kendall tau undefined: constant input")]
    ConstantInput,

    #[error("reference step {0} missing from the checkpoint series")]
    MissingReferenceStep(usize),

    #[error("candidate is not better: {0} conditions failed")]
    NotBetter(usize),

    #[error("vocabulary too small: need {needed} distinct keywords, pool has {available}")]
    VocabularyTooSmall { needed: usize, available: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("failed to spawn {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("protocol version mismatch: expected {expected}, adapter speaks {got}")]
    VersionMismatch { expected: u32, got: u64 },

    #[error("timed out after {secs}s waiting for {what}")]
    Timeout { what: &'static str, secs: u64 },

    #[error("adapter error: {0}")]
    Adapter(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(
        path: impl Into<PathBuf>,
        line: Option<usize>,
        message: impl std::fmt::Display,
    ) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    /// Stable process exit code: 1 validation/verdict, 2 usage, 3 I/O or protocol.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Spawn { .. }
            | Error::Protocol(_)
            | Error::VersionMismatch { .. }
            | Error::Timeout { .. }
            | Error::Adapter(_)
            | Error::Checkpoint(_) => 3,
            Error::InvalidArgument(_) => 2,
            _ => 1,
        }
    }
}
