use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("undefined average: no customers")]
    UndefinedAverage,
    #[error("undefined entropy: no positive counts")]
    UndefinedEntropy,
    #[error("undefined gini: need at least 2 positive values, got {0}")]
    UndefinedGini(usize),
    #[error("undefined share bias: district has no transactions")]
    UndefinedShareBias,
    #[error("degenerate correlation: constant vector")]
    DegenerateCorrelation,
    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("degenerate cell: all utilities are zero")]
    DegenerateCell,
    #[error("standardization error: zero variance")]
    ZeroVariance,
    #[error("singular design: dependent columns {0:?}")]
    SingularDesign(Vec<String>),
    #[error("optimizer initialization failed: objective non-finite at every initial particle")]
    InitializationFailure,
}
