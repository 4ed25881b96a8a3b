use thiserror::Error;

/// Errors surfaced by the estimation library.
///
/// The variants map onto the CLI exit-code classes: `Argument` and `Config`
/// are usage errors, `Data` covers malformed inputs, and `Numerical` covers
/// solver failures.
#[derive(Debug, Error)]
pub enum TedError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl TedError {
    /// Wrap the message with additional context while keeping the error class.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            TedError::Argument(m) => TedError::Argument(format!("{ctx}: {m}")),
            TedError::Data(m) => TedError::Data(format!("{ctx}: {m}")),
            TedError::Config(m) => TedError::Config(format!("{ctx}: {m}")),
            TedError::Numerical(m) => TedError::Numerical(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, TedError>;
