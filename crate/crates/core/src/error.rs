use std::path::PathBuf;

use thiserror::Error;

use crate::ParticipantId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset has no examples")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value produced during training")]
    NonFinite,

    #[error("malformed input: {0}")]
    Format(String),

    #[error("class {class} has {available} examples, {required} required")]
    InsufficientClassExamples {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("partition plan cannot be satisfied: {0}")]
    InfeasiblePlan(String),

    #[error("no aggregation weight for participant {0}")]
    MissingWeight(ParticipantId),

    #[error("allocation count {count} outside 0..={dimension}")]
    CountOutOfRange { count: usize, dimension: usize },

    #[error("every participant was evicted from the reputable set")]
    AllEvicted,

    #[error("validation accuracies of the reputable set sum to zero")]
    ZeroValidationSum,

    #[error("participant {0} is not in the reputable set")]
    NotReputable(ParticipantId),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no metrics found under {0}")]
    MissingMetrics(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config write error: {0}")]
    ConfigWrite(#[from] toml::ser::Error),
}

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Runtime,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::ConfigParse(_) | Error::ConfigWrite(_) => {
                ErrorKind::Config
            }
            Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Format(_)
            | Error::MissingMetrics(_) => ErrorKind::Io,
            _ => ErrorKind::Runtime,
        }
    }
}
