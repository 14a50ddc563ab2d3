use thiserror::Error;

/// Errors produced anywhere in the synopsis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range for bound {bound}")]
    Index { index: usize, bound: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("invalid fields: {}", .0.join(", "))]
    Validation(Vec<String>),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Config(_) | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
