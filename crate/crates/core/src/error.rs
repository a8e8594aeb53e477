use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("capacity exceeded: requested {requested} bytes, {available} available")]
    Capacity { requested: u64, available: u64 },

    #[error("out of bounds access: [{start}, {end}) outside namespace of {size} bytes")]
    Bounds { start: u64, end: u64, size: u64 },

    #[error("invalid composition: {0}")]
    Composition(String),

    #[error("corrupted run at address {start}: {reason}")]
    Corruption { start: u64, reason: String },

    #[error("unknown run handle at address {0}")]
    UnknownRun(u64),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("stage {stage}{} failed: {source}", partition.map(|p| format!(" (partition {p})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        partition: Option<u32>,
        #[source]
        source: Box<Error>,
    },

    #[error("plan error: {0}")]
    Plan(String),

    #[error("simulation error for instance {instance}: {message}")]
    Simulation { instance: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, partition: Option<u32>) -> Self {
        Error::Stage {
            stage,
            partition,
            source: Box::new(self),
        }
    }
}
