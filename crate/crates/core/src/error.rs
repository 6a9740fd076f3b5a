use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unstable filter: {0}")]
    Instability(String),

    #[error("singular filter: denominator magnitude {magnitude:.3e} at bin {bin}")]
    SingularFilter { bin: usize, magnitude: f64 },

    #[error("near-singular feedback: |1 - a1 s| = {magnitude:.3e} at frame {frame}, bin {bin}")]
    NearSingularFeedback { frame: usize, bin: usize, magnitude: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("frame count mismatch: expected {expected}, got {got}")]
    FrameCountMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value produced by `{op}` at tape node {node}")]
    NonFinite { op: &'static str, node: usize },

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("no periodicity found in control signal")]
    NoPeriodicity,

    #[error("run aborted: {0}")]
    Aborted(String),

    #[error("parse error in field `{field}`: {msg}")]
    Parse { field: String, msg: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures caused by the numbers rather than the inputs
    /// (divergence, instability, NaN on the tape).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Instability(_)
                | Error::SingularFilter { .. }
                | Error::NearSingularFeedback { .. }
                | Error::NonFinite { .. }
                | Error::Aborted(_)
        )
    }
}
