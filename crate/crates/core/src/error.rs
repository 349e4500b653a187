use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum MvmlError {
    #[error("input error: {0}")]
    Input(String),

    #[error("degenerate bandwidth: {0}")]
    DegenerateBandwidth(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("solver diverged at iteration {iteration}: objective = {value}")]
    Divergence { iteration: usize, value: f64 },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("deserialization error in field `{field}`: {reason}")]
    Deserialize { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MvmlError>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(MvmlError::Input(msg.into()))
}
