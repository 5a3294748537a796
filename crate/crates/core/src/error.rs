use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    Axis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },

    #[error("sequence of length {len} exceeds target length {target}")]
    LengthOverflow { len: usize, target: usize },

    #[error("key length {keys} differs from value length {values}")]
    SequenceLength { keys: usize, values: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("backward called on a loss that does not depend on any tracked tensor")]
    UntrackedGraph,

    #[error("backward already ran on this tape; build a new tape for another pass")]
    AlreadyBackpropagated,

    #[error("missing {0} features")]
    MissingModality(&'static str),

    #[error("unknown emotion label {0:?}")]
    UnknownLabel(String),

    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("stored dtype {found} does not match requested {expected}")]
    Dtype {
        expected: &'static str,
        found: &'static str,
    },

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by bad inputs or configuration rather than a
    /// failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape { .. }
                | Error::Rank { .. }
                | Error::Axis { .. }
                | Error::LengthOverflow { .. }
                | Error::SequenceLength { .. }
                | Error::InvalidParameter(_)
                | Error::Config(_)
                | Error::MissingModality(_)
                | Error::UnknownLabel(_)
                | Error::ClassIndex { .. }
                | Error::Dtype { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
