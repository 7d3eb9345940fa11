use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {requested} classes requested, at most {capacity} representable")]
    Capacity { requested: usize, capacity: usize },

    #[error("model spec is invalid: {0}")]
    InvalidSpec(String),

    #[error(
        "weight file fingerprint {found:#018x} does not match spec fingerprint {expected:#018x}"
    )]
    FingerprintMismatch { expected: u64, found: u64 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("detection references unknown image id `{0}`")]
    UnknownImage(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("detections changed between benchmark iterations (frame {0})")]
    Nondeterministic(u64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
