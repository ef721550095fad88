use std::path::PathBuf;

/// Errors produced by the reconstruction library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("infeasible measurements: {0}")]
    Infeasible(String),

    #[error("sample pattern violates hypothesis: {0}")]
    Pattern(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    Arity { needed: usize, got: usize },

    #[error("value out of representable range: {0}")]
    Range(String),

    #[error("problem too large for dense routine: size {size} exceeds cap {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("point is not feasible: violation {violation:e}")]
    NotFeasible { violation: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(expected: usize, actual: usize) -> Self {
        Error::Dimension { expected, actual }
    }
}
