//! Process-level errors and their exit codes.

use std::fmt;

/// Result alias for everything the command-line layer does.
pub type AppResult<T> = Result<T, AppError>;

/// Failure of a command, split by who can fix it.
///
/// The exit-code contract: 0 success, 1 usage or configuration error,
/// 2 runtime failure. Anything wrong with the invocation itself (flags,
/// config files, missing inputs, unwritable output paths) is `Config`;
/// work that started and then failed (a diverging seed, an estimation
/// that ran out of budget) is `Runtime`.
#[derive(Debug, Clone, PartialEq)]
pub enum AppError {
    Config(String),
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 1,
            AppError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "{msg}"),
            AppError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for AppError {}

/// Shorthand for read failures that the user can fix by pointing at a
/// real, readable file.
pub fn read_err(path: &std::path::Path, err: std::io::Error) -> AppError {
    AppError::Config(format!("cannot read {}: {err}", path.display()))
}

/// Shorthand for write failures; unwritable outputs are usage errors.
pub fn write_err(path: &std::path::Path, err: std::io::Error) -> AppError {
    AppError::Config(format!("cannot write {}: {err}", path.display()))
}
