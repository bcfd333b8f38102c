use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A preorder word broke the prefix rule, contained a stray character,
    /// or ended with leaves still pending. `index` is the offending position
    /// (the string length when the input ran out).
    #[error("malformed preorder encoding at index {index}: {reason}")]
    MalformedEncoding { index: usize, reason: &'static str },

    #[error("invalid tree size {0}: sizes must be odd and at least 1")]
    InvalidSize(u64),

    #[error("enumeration of size {size} exceeds the budget of {max} nodes")]
    BudgetExceeded { size: u64, max: u64 },

    #[error("threshold {0} is not supported by this model")]
    UnsupportedThreshold(usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("worker {0} is not registered with the node store")]
    UnknownWorker(usize),

    #[error("node store exhausted: {0}")]
    StoreExhausted(&'static str),

    #[error("retry budget of {0} attempts exhausted")]
    Overflow(u64),

    #[error("generating function is not a proper distribution: {0}")]
    ImproperPgf(String),

    #[error("closed form produced a non-integral count at (n={n}, k={k})")]
    NonIntegral { n: u64, k: u64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
}
