use dynlf_autodiff::AdError;
use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: header promises {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{what} = {value} is not divisible by {by}")]
    NotDivisible { what: &'static str, value: usize, by: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("texture too small: {0}")]
    TextureTooSmall(String),
    #[error("insufficient translation margin: {0}")]
    InsufficientMargin(String),
    #[error("light field covers {have} time units, capture needs {need}")]
    InsufficientTemporalExtent { have: usize, need: usize },
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("unknown benchmark {0:?}")]
    UnknownBenchmark(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("unknown config key {0:?}")]
    UnknownConfigKey(String),
    #[error("non-finite gradient in parameter {param} at step {step}")]
    NonFiniteGradient { param: String, step: u64 },
    #[error("non-finite loss at step {step}; offending sample: {manifest_line}")]
    NonFiniteLoss { step: u64, manifest_line: String },
    #[error("checkpoint does not match configuration: {0}")]
    CheckpointMismatch(String),
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "bad-magic",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::Truncated { .. } => "truncated",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::NotDivisible { .. } => "not-divisible",
            Error::IndexOutOfRange(_) => "index-out-of-range",
            Error::InvalidDims(_) => "invalid-dims",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::TextureTooSmall(_) => "texture-too-small",
            Error::InsufficientMargin(_) => "insufficient-margin",
            Error::InsufficientTemporalExtent { .. } => "insufficient-temporal-extent",
            Error::UnknownVariant(_) => "unknown-variant",
            Error::UnknownBenchmark(_) => "unknown-benchmark",
            Error::Config { .. } => "config",
            Error::UnknownConfigKey(_) => "unknown-config-key",
            Error::NonFiniteGradient { .. } => "non-finite-gradient",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::CheckpointMismatch(_) => "checkpoint-mismatch",
            Error::MissingArtifact(_) => "missing-artifact",
            Error::Autodiff(_) => "autodiff",
            Error::Io(_) => "io",
        }
    }

    /// Process exit status used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::UnknownConfigKey(_) | Error::UnknownVariant(_) | Error::UnknownBenchmark(_) => 2,
            Error::MissingArtifact(_) => 3,
            Error::BadMagic { .. } | Error::UnsupportedVersion(_) | Error::Truncated { .. } | Error::CheckpointMismatch(_) => 4,
            Error::DimensionMismatch(_)
            | Error::NotDivisible { .. }
            | Error::IndexOutOfRange(_)
            | Error::InvalidDims(_)
            | Error::TextureTooSmall(_)
            | Error::InsufficientMargin(_)
            | Error::InsufficientTemporalExtent { .. }
            | Error::Autodiff(_) => 5,
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => 6,
            Error::InvalidArgument(_) => 7,
            Error::Io(_) => 8,
        }
    }
}
