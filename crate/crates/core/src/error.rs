use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("channel supports only {usable} usable streams, {requested} requested")]
    InsufficientStreams { requested: usize, usable: usize },

    #[error("degenerate training samples: {distinct} distinct values, need at least {required}")]
    DegenerateSamples { distinct: usize, required: usize },

    #[error("cannot normalize an all-zero vector")]
    ZeroPower,

    #[error("reference channel has zero norm")]
    ZeroChannel,

    #[error("non-finite loss at batch {batch}")]
    NonFiniteLoss { batch: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed degradation table: {0}")]
    MalformedTable(String),

    #[error("missing codebook for {0} bits")]
    MissingCodebook(u8),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
