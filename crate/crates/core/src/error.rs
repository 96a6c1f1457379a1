use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("empty sequence: {0}")]
    EmptySequence(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class index {index} out of range [0, {max}]")]
    TargetOutOfRange { index: usize, max: usize },

    #[error("degenerate interval [{start}, {end}]")]
    DegenerateInterval { start: f64, end: f64 },

    #[error("non-finite {what} at {location}")]
    NonFinite { what: &'static str, location: String },

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("{path}: bad magic bytes, expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: payload size disagrees with header, expected {expected} bytes, found {found}")]
    DimensionMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown subset {0:?} (expected train, validation or testing)")]
    UnknownSubset(String),

    #[error("missing predictions for {} video(s): {}", .0.len(), .0.join(", "))]
    MissingVideos(Vec<String>),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line tool: 2 for data errors,
    /// 3 for numerical failures. Usage errors (1) are produced by the
    /// argument parser before any of these can occur.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}
