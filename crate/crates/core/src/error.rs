use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value produced in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("training history is empty")]
    EmptyHistory,

    #[error("non-finite gradient feature")]
    NonFinite,

    #[error("no arms to select from")]
    EmptyArms,

    #[error("gram matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("gradient matrix is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("kernel system stayed singular after jitter escalation up to {jitter:e}")]
    KernelSingular { jitter: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("bad magic number 0x{observed:08x}, expected 0x{expected:08x}")]
    BadMagic { observed: u32, expected: u32 },

    #[error("truncated data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("cannot normalize a zero-norm context")]
    ZeroNorm,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("round grids differ: {0}")]
    GridMismatch(String),

    #[error("run artifacts carry no stored initialization gradients")]
    MissingGradients,

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad user input rather than data or numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
