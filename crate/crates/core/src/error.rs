use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed case or state document.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A case that parses but violates a model invariant.
    #[error("invalid case: {0}")]
    Validation(String),

    /// The relaxation cannot be built from the case (e.g. negative quadratic cost).
    #[error("model error: {0}")]
    Model(String),

    #[error("compile error: {0}")]
    Compile(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("recovery failed: {0}")]
    Recovery(String),

    #[error("oracle failed: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
}
