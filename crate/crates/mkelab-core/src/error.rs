//! Error type shared by every fallible operation in the crate.

use alloc::string::String;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Why an operation could not produce a value.
///
/// Errors carry enough context to name the offending quantity; callers in
/// the companion crate map them onto process exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A vector or matrix had the wrong length for the operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An alleged probability vector had negative entries, entries above
    /// one, or did not sum to one within tolerance.
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    /// A configuration value was outside its legal range or inconsistent
    /// with the rest of the configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A NaN or infinity appeared where a finite number is required.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}
