use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry mismatch: expected {expected}, found {found}")]
    GeometryMismatch { expected: String, found: String },

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("invalid label {label} at record {index}")]
    BadLabel { index: usize, label: u8 },

    #[error("feature cache checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    Checksum { stored: u64, computed: u64 },

    #[error("feature cache provenance mismatch: cache has {found}, requested {expected}")]
    ProvenanceMismatch { expected: String, found: String },

    #[error("malformed feature cache: {0}")]
    CacheFormat(String),

    #[error("training diverged at step {step}: non-finite gradient")]
    Divergence { step: usize },

    #[error("no noise multiplier up to {sigma_max} reaches epsilon {target} (got {achieved})")]
    BracketExhausted {
        sigma_max: f64,
        target: f64,
        achieved: f64,
    },

    #[error("dataset not available: {0}")]
    MissingData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by malformed or missing input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::Truncated { .. }
                | Error::CountMismatch { .. }
                | Error::BadLabel { .. }
                | Error::Checksum { .. }
                | Error::ProvenanceMismatch { .. }
                | Error::CacheFormat(_)
                | Error::MissingData(_)
                | Error::Io(_)
        )
    }
}
