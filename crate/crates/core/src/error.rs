use std::path::PathBuf;

use thiserror::Error;

/// Invalid simulation parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("number of bins must be positive")]
    NoBins,
    #[error("number of choices must be at least 1")]
    NoChoices,
    #[error("cannot choose {d} distinct bins out of {n}")]
    TooManyChoices { d: usize, n: usize },
    #[error("retry cap must be at least 1")]
    ZeroRetryCap,
    #[error("trial count must be positive")]
    NoTrials,
    #[error("beta must lie strictly between 0 and 1, got {0}")]
    InvalidBeta(f64),
    #[error("the one-plus-beta process needs a beta value")]
    MissingBeta,
    #[error("invalid weight model: {0}")]
    InvalidWeightModel(String),
    #[error("invalid dimensions: {populated} populated out of {dims}")]
    InvalidDims { dims: usize, populated: usize },
    #[error("invalid dimension distribution: {0}")]
    InvalidDimDistribution(String),
    #[error("algorithm `{algorithm}` does not support the {variant} variant")]
    UnsupportedVariant { algorithm: String, variant: String },
    #[error("invalid estimate policy: {0}")]
    InvalidPolicy(String),
    #[error("instance too large for the reference allocator (n={n}, m={m})")]
    InstanceTooLarge { n: usize, m: u64 },
    #[error("cannot build a report from an empty bin list")]
    EmptyBins,
    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path} (cell {cell:?}): {source}")]
    Io {
        path: PathBuf,
        cell: Option<usize>,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} (cell {cell:?}): {source}")]
    Csv {
        path: PathBuf,
        cell: Option<usize>,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
