use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between reading inputs and writing reports.
///
/// Variants split into two families: format/I-O problems (the input could
/// not be read or decoded) and domain problems (the input decoded fine but
/// violates an invariant). [`Error::is_format`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("format error at line {line}: {message}")]
    FormatAt { line: usize, message: String },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("invalid {kind} id `{id}`: {reason}")]
    InvalidId {
        kind: &'static str,
        id: String,
        reason: &'static str,
    },

    #[error("label `{0}` is not part of the label universe")]
    UnknownLabel(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("task `{task}` references unknown activity `{label}`")]
    DanglingActivity { task: String, label: String },

    #[error("task `{0}` has no activities")]
    EmptyTask(String),

    #[error("label `{0}` has an empty prompt")]
    EmptyPrompt(String),

    #[error("schedule entry {index} (task `{task}`): start {start} is not before end {end}")]
    InvalidWindow {
        index: usize,
        task: String,
        start: String,
        end: String,
    },

    #[error("no scheduled task is active at {0}")]
    NoActiveTask(String),

    #[error("label spaces were drawn from different registries")]
    MixedRegistry,

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("label space is empty")]
    EmptyLabelSpace,

    #[error("label `{0}` is not contained in the enclosing label space")]
    NotSubset(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in embedding")]
    NonFinite,

    #[error("embedding has (near) zero norm")]
    ZeroNorm,

    #[error("no class embedding for label `{0}`")]
    MissingEmbedding(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no ground truth for clip `{0}`")]
    MissingTruth(String),

    #[error("runs differ in clip sets (only in baseline: {only_baseline:?}; only in restricted: {only_restricted:?})")]
    ClipSetMismatch {
        only_baseline: Vec<String>,
        only_restricted: Vec<String>,
    },

    #[error("runs disagree on the ground truth of clip `{0}`")]
    TruthMismatch(String),

    #[error("clip `{clip}`: {source}")]
    Clip {
        clip: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(line: usize, message: impl Into<String>) -> Self {
        Error::FormatAt {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn for_clip(self, clip: &str) -> Self {
        Error::Clip {
            clip: clip.to_string(),
            source: Box::new(self),
        }
    }

    /// True for I/O and decoding failures, false for domain violations.
    pub fn is_format(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format(_) | Error::FormatAt { .. } => true,
            Error::Clip { source, .. } => source.is_format(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
