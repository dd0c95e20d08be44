use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the denoising toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: file not found", path.display())]
    MissingFile { path: PathBuf },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported magic {0:?}: expected P2 or P5")]
    UnsupportedMagic(String),

    #[error("unsupported maxval {0}: only 255 is accepted")]
    UnsupportedMaxval(u32),

    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),

    #[error("truncated PGM payload: expected {expected} samples, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("invalid PGM sample: {0}")]
    InvalidSample(String),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("window index {index} out of range (n_w = {n_w})")]
    IndexOutOfRange { index: usize, n_w: usize },

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }

    /// True for failures caused by reading or writing files, including
    /// malformed image files. False for argument and geometry validation.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::MissingFile { .. }
                | Error::Io { .. }
                | Error::UnsupportedMagic(_)
                | Error::UnsupportedMaxval(_)
                | Error::MalformedHeader(_)
                | Error::TruncatedPayload { .. }
                | Error::InvalidSample(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
