use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal quality: {0}")]
    SignalQuality(String),

    #[error("signal lost: gap of {missing} samples after t = {t_ms} ms")]
    SignalLoss { t_ms: f64, missing: usize },

    #[error("invalid profile parameters: {0}")]
    InvalidParams(String),

    #[error("stance window too short: {len} samples (need {min})")]
    WindowTooShort { len: usize, min: usize },

    #[error("stiffness identification failed: {0}")]
    Identification(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
