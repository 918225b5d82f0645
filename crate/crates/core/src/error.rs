//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for construction, evaluation, and simulation failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is structurally invalid (wrong range, missing
    /// field, inconsistent combination). The string names the offending field.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A function evaluation produced a non-finite or otherwise unusable
    /// value where a finite one was required.
    #[error("evaluation failed: {0}")]
    Evaluation(String),

    /// A numerical routine (quadrature, root bracketing, series summation)
    /// failed to reach its requested tolerance.
    #[error("numerical routine did not converge: {0}")]
    Numerical(String),

    /// Certificate parameters violate a validity condition, so no finite
    /// bound exists for the requested inputs.
    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),

    /// A mathematical precondition on the arguments does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The rejection-sampling envelope was observed to lie below the target.
    #[error("envelope violation: {0}")]
    Envelope(String),

    /// A sampler loop exceeded its stall guard without making progress.
    #[error("sampler stalled: {0}")]
    Stall(String),

    /// An operation that needs at least one sample received none.
    #[error("empty input: {0}")]
    Empty(String),

    /// Filesystem or serialization failure while reading or writing results.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
