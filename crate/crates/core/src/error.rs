use thiserror::Error;

/// Errors produced by the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration file or option is invalid (exit code 2 in the CLI).
    #[error("config error: {0}")]
    Config(String),

    /// An argument is outside the physical or mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A fit could not be performed (singular normal matrix, too few bins, ...).
    #[error("fit error: {0}")]
    Fit(String),

    /// An input file does not match the expected schema.
    #[error("parse error: {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }

    /// CLI exit code convention: 0 success, 2 config error, 3 runtime error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
