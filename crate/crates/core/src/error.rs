use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("weights sum to zero (trivial solution)")]
    TrivialWeights,

    #[error("insufficient runs for bin {bin}: have {have}, need at least {need}")]
    InsufficientRuns { bin: String, have: usize, need: usize },

    #[error("rank-deficient design matrix while fitting bin {bin}; add more (or better spread) runs")]
    RankDeficient { bin: String },

    #[error("pole inside sampled domain for bin {bin}")]
    Pole { bin: String },

    #[error("rational denominator is not positive at the requested point for bin {bin}")]
    DenominatorNotPositive { bin: String },

    #[error("all {starts} multistart local solves failed; last error: {last}")]
    AllStartsFailed { starts: usize, last: String },

    #[error("singular RBF system: {0}; use more or better spread points")]
    SingularRbf(String),

    #[error("parameters unidentifiable at the tuned point (singular information matrix)")]
    Unidentifiable,

    #[error("too few effective observables for eigentunes (effective count {0})")]
    TooFewEffective(f64),

    #[error("flat direction: no bracket found along eigenvector {0}")]
    FlatDirection(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
