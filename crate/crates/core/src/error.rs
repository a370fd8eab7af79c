use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image space: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("space too large: {guard} allows at most {limit}, requested {requested}")]
    SpaceTooLarge {
        guard: &'static str,
        limit: u128,
        requested: u128,
    },

    #[error("abstraction mismatch: model A has {a} levels, model B has {b}")]
    AbstractionMismatch { a: usize, b: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no constraint edit reaches the target label at level {level}")]
    Unreachable { level: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
