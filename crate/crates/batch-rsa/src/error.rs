use thiserror::Error;

use crate::paramgen::SieveReport;

#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition was violated (bad range, size mismatch,
    /// malformed exponent list, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("key generation failed: {0}")]
    KeyGeneration(String),

    /// A batch ciphertext shares a factor with the modulus. The index is
    /// reported; the factor itself is deliberately not echoed.
    #[error("ciphertext at index {index} is not invertible modulo n")]
    NotInvertible { index: usize },

    /// A completed action no longer matches the queue heads it was issued
    /// for; the single-owner contract was broken.
    #[error("scheduler integrity violation: {0}")]
    Integrity(String),

    /// Queue capacity reached; the request was rejected.
    #[error("queue overload: {0}")]
    Overload(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Sieved generation ran out of attempts; carries the last report so the
    /// caller can see which check keeps failing.
    #[error("sieve rejected all {attempts} candidate keys; last failing check: {}", .last_report.first_failure())]
    SieveExhausted {
        attempts: u32,
        last_report: Box<SieveReport>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
