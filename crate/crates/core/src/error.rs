use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
///
/// Each variant maps to one process exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error ({module}): {message}")]
    Config {
        module: &'static str,
        message: String,
    },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("domain error at row {row}, column `{column}`: {message}")]
    Domain {
        row: usize,
        column: String,
        message: String,
    },

    #[error("insufficient data ({module}): {message}")]
    InsufficientData {
        module: &'static str,
        message: String,
    },

    #[error("numeric failure ({module}): {message}")]
    Numeric {
        module: &'static str,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(module: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn insufficient(module: &'static str, message: impl Into<String>) -> Self {
        Error::InsufficientData {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn numeric(module: &'static str, message: impl Into<String>) -> Self {
        Error::Numeric {
            module,
            message: message.into(),
        }
    }

    /// Process exit code: 1 = configuration, 2 = data, 3 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Json(_) => 1,
            Error::Parse { .. }
            | Error::Domain { .. }
            | Error::InsufficientData { .. }
            | Error::Io(_)
            | Error::Csv(_) => 2,
            Error::Numeric { .. } => 3,
        }
    }
}
