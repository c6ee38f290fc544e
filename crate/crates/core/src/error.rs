use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("class {class} has {available} samples, need at least {required}")]
    TooFewSamples {
        class: usize,
        available: usize,
        required: usize,
    },
    #[error("class {0} missing from training data")]
    MissingClass(String),
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cycle pattern not flanked by static modes")]
    UnflankedPattern,
    #[error("{count} transitions exceed the {slots} encoder slots")]
    TooManyTransitions { count: usize, slots: usize },
    #[error("overlapping or unordered events at index {0}")]
    OverlappingEvents(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
}
