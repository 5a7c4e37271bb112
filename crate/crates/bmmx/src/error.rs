//! Error type shared across the crate.
//!
//! Errors split into two families: configuration problems (bad sample
//! sizes, bad experiment parameters) and data problems (unreadable
//! inputs, corrupt payloads). The CLI maps the former to exit code 2
//! and the latter to exit code 3 via [`Error::exit_code`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Every value in the vector is zero, so no inclusion probability
    /// assignment can reach a positive expected sample size.
    #[error("no mass to sample: every value is zero")]
    NoMass,

    /// The requested expected sample size is outside (0, d].
    #[error("invalid sample size: {0}")]
    InvalidSampleSize(String),

    /// An input value is NaN or infinite.
    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    /// The unbiased estimator's MSE is undefined when the inclusion
    /// probability is zero.
    #[error("undefined MSE: inclusion probability is zero")]
    UndefinedMse,

    /// A caller-supplied quantity is outside the range an estimator
    /// formula is defined on.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    /// A sampling plan was paired with a vector it was not built for.
    #[error("sampling plan does not match vector: {0}")]
    PlanMismatch(String),

    /// A site vector failed structural validation.
    #[error("invalid vector: {0}")]
    InvalidVector(String),

    /// An aggregation was attempted over zero sites.
    #[error("no site summaries to merge")]
    NoSummaries,

    /// A payload's structure is inconsistent (bad counts, unsorted
    /// keys, nonzero padding, trailing bytes).
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    /// The payload is not in a format this decoder understands.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// The payload ends before its declared contents do.
    #[error("truncated payload: need {expected} bytes, have {actual}")]
    TruncatedPayload { expected: usize, actual: usize },

    /// A decoded number is unusable (NaN, infinite, or otherwise
    /// outside its legal range).
    #[error("corrupt value: {0}")]
    CorruptValue(String),

    /// An experiment or CLI configuration is rejected up front.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Input data could not be parsed.
    #[error("bad input data: {0}")]
    Data(String),

    /// A harness trial failed; carries the trial index for replay.
    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration errors,
    /// 3 for data and runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidSampleSize(_) => 2,
            Error::Trial { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
