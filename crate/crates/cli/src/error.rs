use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("config key `{key}`: {message}")]
    Value { key: String, message: String },

    #[error("unknown config key(s): {0}")]
    UnknownKeys(String),

    #[error(transparent)]
    Model(#[from] cavi::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn value(key: &str, message: impl Into<String>) -> Self {
        CliError::Value {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
