use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes. The CLI maps these onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("jacobi eigen solver did not converge after {sweeps} sweeps on a {rows}x{cols} matrix")]
    NoConvergence { rows: usize, cols: usize, sweeps: usize },

    #[error("zero-rank bag")]
    ZeroRank,

    #[error("column {column} has zero norm and cannot be normalized")]
    ZeroColumn { column: usize },

    #[error("non-finite value produced at stage `{0}`")]
    NonFinite(&'static str),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("NRL accepts negative bags only (bag {0} is positive)")]
    PositiveBag(u32),

    #[error("bag {0} has no instance labels")]
    MissingInstanceLabels(u32),

    #[error("labels contain a single class; both classes are required ({0})")]
    SingleClass(&'static str),

    #[error("unknown bag id {0}")]
    UnknownBag(u32),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("file truncated while reading {0}")]
    Truncated(&'static str),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("gradient check failed: max relative error {max_error:.3e} in block `{block}`")]
    GradCheck { block: &'static str, max_error: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::NoConvergence { .. }
            | Error::NonFinite(_)
            | Error::NonFiniteGradient(_)
            | Error::GradCheck { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
