use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error("cube depth {0} exceeds the supported maximum")]
    DepthOverflow(u32),
    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),
    #[error("invalid horizon T={0}: need T >= 2")]
    InvalidHorizon(u64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("infeasible peak set: {0}")]
    InfeasiblePeaks(String),
    #[error("feedback channel violation: {0}")]
    ChannelViolation(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
