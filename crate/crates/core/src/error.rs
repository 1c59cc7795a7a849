use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside range [{low}, {high}]")]
    Range { value: f64, low: f64, high: f64 },

    #[error("bin index {0} carries no coordinate")]
    Sentinel(u16),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("sequence of {len} tokens exceeds limit of {limit}")]
    LengthExceeded { len: usize, limit: usize },

    #[error("unsupported path command '{0}'")]
    UnsupportedCommand(char),

    #[error("path parse error at byte {offset}: {msg}")]
    PathParse { offset: usize, msg: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("svg document error: {0}")]
    Svg(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("non-finite loss at step {step} (last good checkpoint: {last_good})")]
    NonFiniteLoss { step: u64, last_good: String },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
