use thiserror::Error;

/// Errors produced by the verifier library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry: {0}")]
    NonFinite(String),

    #[error("queries reference different networks")]
    DifferentNetwork,

    #[error("pop on empty constraint stack")]
    EmptyStack,

    #[error("frame would widen input dimension {0}")]
    WideningFrame(usize),

    #[error("clause mentions neuron ({0}, {1}) more than once")]
    TautologicalClause(usize, usize),

    #[error("implied literals requested after an unsatisfiable or missing solve")]
    NoImpliedLiterals,

    #[error("LP did not converge within the iteration cap")]
    LpUnstable,

    #[error("neuron ({0}, {1}) does not exist in this network")]
    UnknownNeuron(usize, usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid bracket: {0}")]
    InvalidBracket(String),

    #[error("argmax at the reference input is not unique")]
    NonUniqueArgmax,

    #[error("input dimension {0} has zero width but the query still times out")]
    ZeroWidthTimeout(usize),

    #[error("instance exceeds the oracle cap: {0}")]
    OracleCap(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
