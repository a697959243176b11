use thiserror::Error;

/// Errors produced while validating inputs or configuring computations.
///
/// An undefined test statistic (total variance zero) is not an error; it is
/// represented as `None` in the result types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty population")]
    EmptyPopulation,

    #[error("invalid time {0}: times must be finite and nonnegative")]
    InvalidTime(f64),

    #[error("invalid group {0}: groups are coded 0 (control) and 1 (treated)")]
    InvalidGroup(u8),

    #[error("invalid probability {0}: must lie strictly between 0 and 1")]
    InvalidProbability(f64),

    #[error("invalid counts: total {n}, events {d}, treated at risk {n1}")]
    InvalidCounts { n: u32, d: u32, n1: u32 },

    #[error("size mismatch: {left} {left_len} vs {right} {right_len}")]
    SizeMismatch {
        left: &'static str,
        left_len: usize,
        right: &'static str,
        right_len: usize,
    },

    #[error("stratum {0} has no mechanism")]
    MissingMechanism(u32),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("enumeration over {n} units exceeds the cap of {cap}; raise the cap explicitly for larger runs")]
    EnumerationTooLarge { n: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
