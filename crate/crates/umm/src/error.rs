use std::io;
use std::path::PathBuf;

use thiserror::Error;
use umm_core::UmmError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported session format version {found} (this build reads version {supported})")]
    FormatVersionUnsupported { found: u32, supported: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corrupt payload: expected {expected} bytes, found {found}")]
    CorruptPayload { expected: u64, found: u64 },
    #[error("decision log has no true symbols (session {session})")]
    MissingLabels { session: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: invalid manifest: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Decoder(#[from] UmmError),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
