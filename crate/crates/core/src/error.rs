use std::path::PathBuf;

use thiserror::Error;

use crate::weyl::WeylIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),

    #[error("index {index} out of range for bound {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("Weyl operator {0} does not have distinct eigenvalues")]
    DegenerateProbe(WeylIndex),

    #[error("{name} = {value} is outside [{min}, {max}]")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("not a probability vector: {0}")]
    NotProbabilityVector(String),

    #[error("malformed density matrix: {0}")]
    MalformedState(String),

    #[error("no sufficient configuration for d = {d}: rank {rank} < {target} using every non-degenerate operator")]
    Insufficient { d: usize, rank: usize, target: usize },

    #[error("design matrix is rank deficient: rank {rank} < {target}")]
    RankDeficient { rank: usize, target: usize },

    #[error("matrix is singular")]
    Singular,

    #[error("matrix condition number {condition:e} exceeds cap {cap:e}")]
    IllConditioned { condition: f64, cap: f64 },

    #[error("{shots} channel uses cannot cover {configs} measurement configurations")]
    TooFewShots { shots: u64, configs: usize },

    #[error("count vector has zero shots")]
    ZeroShots,

    #[error("counts do not match the measurement configuration: {0}")]
    MisalignedCounts(String),

    #[error("oracle simulation is limited to d <= {max}, got {d}")]
    OracleDimension { d: usize, max: usize },

    #[error("need at least {needed} trials, got {got}")]
    TooFewTrials { needed: usize, got: usize },

    #[error("invalid metric input: {0}")]
    InvalidMetricInput(String),

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error("unsupported format version {found} in {what} (expected {expected})")]
    FormatVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
