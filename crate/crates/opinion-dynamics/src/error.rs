//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} of the influence matrix sums to {sum:e}, expected 1")]
    NonStochasticRow { row: usize, sum: f64 },

    #[error("{location} = {value} is outside [0, 1]")]
    OutOfRangeEntry { location: String, value: f64 },

    #[error("dimension mismatch: {what}")]
    DimensionMismatch { what: String },

    /// The anchored-averaging limit operator does not exist: some independent
    /// strongly connected component contains no stubborn agent.
    #[error("singular system: an independent strongly connected component has no stubborn agent")]
    SingularSystem,

    #[error("did not settle within {max_iter} iterations")]
    NonConvergent { max_iter: usize },

    #[error("{check}: precondition failed: {precondition}")]
    PreconditionViolated {
        check: &'static str,
        precondition: String,
    },

    #[error("confidence gain h = {h} must satisfy h > 0 and 1 - (n-1)h > 0 (n = {n})")]
    GainOutOfRange { h: f64, n: usize },

    #[error("eigenvalue iteration failed on a {n}x{n} matrix")]
    EigensolverFailure { n: usize },

    #[error("matrix order {n} exceeds the dense-solver limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario: {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to: 1 for invalid input,
    /// 2 for numeric or internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonStochasticRow { .. }
            | Error::OutOfRangeEntry { .. }
            | Error::DimensionMismatch { .. }
            | Error::PreconditionViolated { .. }
            | Error::GainOutOfRange { .. }
            | Error::TooLarge { .. }
            | Error::Parse { .. }
            | Error::Validation { .. } => 1,
            Error::SingularSystem
            | Error::NonConvergent { .. }
            | Error::EigensolverFailure { .. }
            | Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
