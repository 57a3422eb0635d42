use alloc::string::String;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("degenerate vector: cannot normalize a zero-norm input")]
    DegenerateVector,
    #[error("input too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("no voiced frames: the signal is silent")]
    EmptyVoice,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model spec error: {0}")]
    Spec(String),
    #[error("non-finite value encountered in {0}")]
    Numeric(String),
    #[error("user `{0}` is already enrolled")]
    Conflict(String),
    #[error("face class {class} is already bound to user `{user}`")]
    ClassTaken { class: usize, user: String },
    #[error("face class {0} is not bound to any enrolled user")]
    UnmappedClass(usize),
    #[error("user `{0}` is not enrolled")]
    UnknownUser(String),
    #[error("model fingerprint mismatch: store expects {expected:016x}, model has {actual:016x}")]
    FingerprintMismatch { expected: u64, actual: u64 },
    #[error("enrollment store is empty")]
    EmptyStore,
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
