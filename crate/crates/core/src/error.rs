use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("rate {rate} bits does not exceed the label entropy {entropy} bits")]
    InfeasibleRate { rate: f64, entropy: f64 },

    #[error("every class has zero variance; rate allocation is degenerate")]
    DegenerateSource,

    #[error("class {0} is empty; its statistics are undefined")]
    UndefinedClass(usize),

    #[error("signal is constant; the classification gain is undefined")]
    UndefinedGain,

    #[error("signal has zero range")]
    DegenerateSignal,

    #[error("instance too large for exhaustive search: {classes}^{samples} labelings exceed the 2^24 guard")]
    TooLarge { samples: usize, classes: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
