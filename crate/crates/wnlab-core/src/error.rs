//! Error type shared by all core operations.

use alloc::string::String;
use core::fmt;

/// Errors raised by core operations. Every variant carries enough context to
/// identify the offending argument without a backtrace.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Grid construction rejected (dimension, size or width out of range).
    InvalidGrid(String),
    /// Two objects that must share a grid do not.
    GridMismatch,
    /// A bandwidth component is below the resolvability floor.
    /// Carries the axis and the offending lattice level.
    Unresolvable { axis: usize, level: u32 },
    /// Argument outside the operation's domain.
    InvalidArgument(String),
    /// A packing/calibration search exhausted its budget. Carries a
    /// description of the best attempt.
    SearchFailed(String),
    /// Rate-calculus operation requested outside its zone of validity.
    ZoneMismatch(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            CoreError::GridMismatch => write!(f, "operands live on different grids"),
            CoreError::Unresolvable { axis, level } => write!(
                f,
                "bandwidth level {level} on axis {axis} is below the grid resolvability floor"
            ),
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            CoreError::SearchFailed(msg) => write!(f, "search failed: {msg}"),
            CoreError::ZoneMismatch(msg) => write!(f, "zone mismatch: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
