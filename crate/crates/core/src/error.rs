use thiserror::Error;

/// Errors raised by the inference engine and its command-line surface.
#[derive(Debug, Error)]
pub enum FluError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model state: {0}")]
    InvalidState(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FluError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FluError::InvalidInput(msg.into())
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            FluError::InvalidInput(_)
                | FluError::Config(_)
                | FluError::Parse { .. }
                | FluError::TooLarge(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, FluError>;
