//! Event-driven midprice paths, jump-size distributions and stylized
//! statistics of the resulting returns.
//!
//! Prices are held internally as integer half-ticks, so the accounting
//! identity `V_k = V_0 + sum of signed jumps` is exact; currency values only
//! appear at the boundary.

mod jumps;
mod path;
mod stylized;

pub use jumps::{fit_jumps, JumpDistribution, JumpTable};
pub use path::{build_path, read_path_csv, unit_jump_path, write_path_csv, PathStep, PricePath};
pub use stylized::{hurst_rs, log_returns, sample_fixed_interval, stylized_stats, StylizedStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PriceError {
    #[error("no {0} aggressive events to fit jump sizes from")]
    NoAggressive(&'static str),
    #[error("aggressive event at index {index} has a non-positive move of {moved} half-ticks in its direction")]
    BadJump { index: usize, moved: i64 },
    #[error("events and midprice records differ in length ({events} vs {mids})")]
    Misaligned { events: usize, mids: usize },
    #[error("invalid jump table: {0}")]
    BadTable(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("need at least {needed} prices, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("{file}:{line}: {reason}")]
    Malformed { file: String, line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PriceError>;
