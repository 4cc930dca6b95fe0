//! Shared error type.
//!
//! The four variants mirror the four failure classes every operation in this
//! crate can hit, and they map one-to-one onto the harness exit codes:
//! rejected input (2), hypothesis failed (3), extraction failed (4),
//! internal assertion (5).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input (bad weights, unsorted sets, …).
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A quantitative hypothesis that must hold before a pipeline may run
    /// was checked and found false. Not a bug: the data simply does not
    /// satisfy the assumption.
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    /// A search procedure (BSG refinement, granule schedule search, …)
    /// exhausted its budget without producing an object that passes its
    /// post-condition verification.
    #[error("extraction failed: {0}")]
    ExtractionFailed(String),

    /// A consequence that is a theorem given the checked hypotheses failed
    /// to hold on the computed data. Always indicates an implementation bug
    /// (or a hypothesis check with a gap); never silently ignored.
    #[error("internal assertion failed: {0}")]
    InternalAssertion(String),
}

impl Error {
    /// Process exit code the harness uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RejectedInput(_) => 2,
            Error::HypothesisFailed(_) => 3,
            Error::ExtractionFailed(_) => 4,
            Error::InternalAssertion(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
