//! Error taxonomy shared across the crate.

use thiserror::Error;

/// All failure modes surfaced by this crate.
///
/// The variants are deliberately coarse: callers dispatch on the kind
/// (bad input vs. bad configuration vs. backend trouble), not on the
/// message text.
#[derive(Debug, Error)]
pub enum Error {
    /// Data handed to an operation violates its contract (non-finite
    /// logits, out-of-range token ids, empty traces, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range (temperature <= 0,
    /// entropy target above log2(V), ...).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The two providers cannot form a switching pair (vocabulary
    /// size or fingerprint mismatch).
    #[error("incompatible pair: {0}")]
    IncompatiblePair(String),

    /// The pair is shaped wrong (small model not smaller than large).
    #[error("misconfigured pair: {0}")]
    MisconfiguredPair(String),

    /// A backend could not be reached after retries. Retriable.
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    /// A backend answered with data that violates the protocol
    /// (wrong vector length, non-finite values, broken schema). Fatal.
    #[error("backend corrupt: {0}")]
    BackendCorrupt(String),

    /// A file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
