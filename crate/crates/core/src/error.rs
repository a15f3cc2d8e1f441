use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("invalid configuration key for attribute {attr}: {message}")]
    InvalidKey { attr: usize, message: String },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("solve_per_query: {0}")]
    InfeasibleBudget(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("artifact error: {0}")]
    Artifact(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    /// Process exit code for this error: 2 input error, 3 infeasible budget,
    /// 4 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleBudget(_) => 3,
            Error::Verification(_) => 4,
            _ => 2,
        }
    }
}
