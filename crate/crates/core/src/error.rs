use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("stochastic forward: gradient check requires dropout to be disabled")]
    StochasticForward,

    #[error("test set overlaps training set: {0:?}")]
    Overlap(Vec<String>),

    #[error("vocabulary mismatch: checkpoint {expected}, embeddings {found}")]
    VocabularyMismatch { expected: String, found: String },
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format { line, message: message.into() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// Short machine-readable tag, used in the CLI's structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
            Error::InvalidInput(_) => "invalid_input",
            Error::Dimension(_) => "dimension",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::StochasticForward => "stochastic_forward",
            Error::Overlap(_) => "overlap",
            Error::VocabularyMismatch { .. } => "vocabulary_mismatch",
        }
    }
}
