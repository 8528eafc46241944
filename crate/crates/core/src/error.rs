use thiserror::Error;

/// Errors raised while loading or validating a scenario document.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse scenario document: {0}")]
    Parse(String),
    #[error("invalid value for `{field}` ({value}): {reason}")]
    Invalid {
        field: String,
        value: String,
        reason: String,
    },
    #[error("split point {0} is not present in the split profile table")]
    UnknownSplit(u32),
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, value: impl ToString, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }
}

/// Errors raised by the channel, latency and scheduling layers.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("UAV height {0} m is outside the RMa-AV validity range [10, 300] m")]
    HeightOutOfRange(f64),
    #[error("infeasible trajectory bounds: {0}")]
    InfeasibleTrajectory(String),
    #[error("transmission of {bits} bits starting at {t_start} s did not finish within {slots} slots")]
    NonTerminating { bits: f64, t_start: f64, slots: u64 },
    #[error("invalid round plan: {0}")]
    InvalidPlan(String),
    #[error("missing step data: {0}")]
    MissingStep(String),
    #[error("oracle limit exceeded: {0}")]
    OracleLimit(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite training loss: {0}")]
    NonFinite(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
