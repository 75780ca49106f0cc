use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidShape { op: &'static str, msg: String },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("graph already released by a previous backward pass (node from `{0}`)")]
    GraphReleased(&'static str),

    #[error("no double-backprop: primitive `{0}` has no differentiable backward rule")]
    NoDoubleBackprop(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {t} outside 1..={steps}")]
    TimeStepOutOfRange { t: usize, steps: usize },

    #[error("non-finite loss term `{0}`")]
    NonFiniteLoss(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is numerical (non-finite values, failed checks) as
    /// opposed to bad input data or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NonFiniteLoss(_) | Error::NoDoubleBackprop(_)
        )
    }
}
