use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// Input outside the documented domain of an operation.
    #[error("domain: {0}")]
    Domain(String),

    /// Geometry that cannot be satisfied (region outside arena, negative extent, ...).
    #[error("geometry: {0}")]
    Geometry(String),

    /// Calibration problem without a usable solution.
    #[error("ill-posed fit: {0}")]
    IllPosed(String),

    /// Not enough samples for the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Bad configuration input; `key` is the full dotted key path.
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// Malformed external file (CSV targets, PGM image, ...).
    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn domain(msg: impl Into<String>) -> Self {
        SimError::Domain(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        SimError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
