use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema mismatch in {file}: expected header `{expected}`, found `{found}`")]
    Schema {
        file: String,
        expected: String,
        found: String,
    },

    #[error("invalid value at {file}:{line}: {reason}")]
    Parse {
        file: String,
        line: u64,
        reason: String,
    },

    #[error("on-net subscriber `{0}` has no tariff plan")]
    MissingPlan(String),

    #[error("unknown subscriber `{0}`")]
    UnknownSubscriber(String),

    #[error("month {month} precedes join month {join} for subscriber `{subscriber}`")]
    MonthBeforeJoin {
        subscriber: String,
        month: String,
        join: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("missing covariate for subscriber `{subscriber}` in month {month}")]
    MissingCovariate { subscriber: String, month: u32 },

    #[error("no events in the survival panel")]
    NoEvents,

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e}, last step {last_step:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last_step: f64,
    },

    #[error("not enough observations: {0}")]
    TooFewObservations(String),

    #[error("empty treatment group {0}")]
    EmptyGroup(String),

    #[error("bootstrap failed: {dropped} of {total} replicates did not converge")]
    Bootstrap { dropped: usize, total: usize },

    #[error("unsupported option: {0}")]
    Unsupported(String),

    #[error("ground truth mismatch: {0}")]
    GroundTruth(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
