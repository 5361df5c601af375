use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("vector set is empty")]
    Empty,

    #[error("row {row} has dimension {got}, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },

    #[error("vectors have zero dimension")]
    ZeroDimension,

    /// The (n, f) combination violates the rule's feasibility condition.
    #[error("{rule} requires {requirement} (got n={n}, f={f})")]
    Infeasible {
        rule: &'static str,
        requirement: &'static str,
        n: usize,
        f: usize,
    },

    #[error("{rule} enumerates subsets and refuses n={n} > {max}")]
    TooLarge {
        rule: &'static str,
        n: usize,
        max: usize,
    },

    #[error("unknown {what} '{name}', expected one of: {valid}")]
    UnknownName {
        what: &'static str,
        name: String,
        valid: String,
    },

    #[error("invalid parameter '{name}': {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
