use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum UncleError {
    /// A caller broke an operation's precondition (shape mismatch, bad index, bad rate).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A ranking metric is undefined for the given labels (no positives or no negatives).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss in {stage} stage at epoch {epoch}: {value}")]
    NonFiniteLoss {
        stage: &'static str,
        epoch: usize,
        value: f64,
    },

    #[error("operation unavailable: {0}")]
    Unavailable(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, UncleError>;

/// Shorthand used at precondition checks.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::UncleError::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> UncleError {
    let path = path.into();
    move |source| UncleError::Io { path, source }
}

pub(crate) fn parse_err(path: impl Into<PathBuf>, msg: impl Into<String>) -> UncleError {
    UncleError::Parse {
        path: path.into(),
        msg: msg.into(),
    }
}
