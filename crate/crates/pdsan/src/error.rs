//! Crate-wide error type.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is missing or invalid; `field` names the key.
    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Rate codings require inputs normalized to [0, 1].
    #[error("state component {index} = {value} outside [0, 1]")]
    UnnormalizedState { index: usize, value: f64 },

    /// An update produced a NaN/inf gradient; parameters were left untouched.
    #[error("non-finite gradient in {0}; update skipped")]
    NonFiniteGradient(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("environment `{0}` failed: {1}")]
    Env(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn config(field: &str, msg: impl Into<String>) -> Self {
        Error::Config { field: field.to_string(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
