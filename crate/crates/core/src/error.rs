use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing frame: {0}")]
    MissingFrame(PathBuf),

    #[error("inconsistent shape: expected {expected}, found {found} ({context})")]
    InconsistentShape {
        expected: String,
        found: String,
        context: String,
    },

    #[error("video {id} has {len} frame(s); at least 2 are required")]
    VideoTooShort { id: String, len: usize },

    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: usize },

    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("item {index} has zero affinity to every other item (sigma = {sigma})")]
    IsolatedItem { index: usize, sigma: f64 },
}

impl Error {
    pub(crate) fn malformed(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Malformed {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input rather than numerics or the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. }
                | Error::NonFiniteGradient { .. }
                | Error::Diverged { .. }
                | Error::IsolatedItem { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
