use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("column {column} has zero norm and defines no direction")]
    DegenerateDirection { column: usize },

    #[error("interpolation parameter t = {0} lies outside [0, 1]")]
    OutOfDomain(f64),

    #[error(
        "the standard route is singular near the endpoints; t = {t} is outside [{lo}, {hi}], use the computed route"
    )]
    EndpointSingularity { t: f64, lo: f64, hi: f64 },

    #[error("variant does not match the vector set: {0}")]
    VariantMismatch(String),

    #[error("vector set must have unit-norm elements for this operation")]
    NonUnitSet,

    #[error("an interpolated norm is exactly zero; the replication is skipped")]
    ZeroNorm,

    #[error("non-finite value produced by replication {index}")]
    NonFinite { index: usize },

    #[error("{skipped} of {total} replications were skipped, above the 0.01% limit")]
    TooManySkipped { skipped: usize, total: usize },

    #[error("replication index {index} is out of range for {replications} replications")]
    IndexOutOfRange { index: usize, replications: usize },

    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("unknown reference table `{0}`")]
    UnknownTable(String),
}

impl Error {
    /// True for errors caused by bad caller input rather than by a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::DegenerateDirection { .. }
                | Error::OutOfDomain(_)
                | Error::EndpointSingularity { .. }
                | Error::VariantMismatch(_)
                | Error::NonUnitSet
                | Error::IndexOutOfRange { .. }
                | Error::UnknownIdentity(_)
                | Error::UnknownFixture(_)
                | Error::UnknownTable(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
