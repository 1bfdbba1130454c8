use thiserror::Error;

/// Errors raised by the simulator, the learning machinery and the runners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("station {station} attempted to transmit while the channel was sensed busy")]
    TransmitWhileBusy { station: usize },

    #[error("station {station} attempted to transmit with an empty buffer")]
    TransmitWithEmptyBuffer { station: usize },

    #[error("joint action has {got} entries, expected {expected}")]
    ActionCount { expected: usize, got: usize },

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("activation cache does not match the network it is applied to")]
    StaleCache,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no successful packets to compute delay statistics from")]
    NoSuccesses,

    #[error("no packets were sent")]
    NothingSent,

    #[error("all throughputs are zero")]
    AllZero,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("value out of range for `{key}`: {reason}")]
    RangeViolation { key: String, reason: String },

    #[error("roster mismatch for `{key}`: {reason}")]
    RosterMismatch { key: String, reason: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("trace format error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
