use thiserror::Error;

use crate::walk::Path;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),

    #[error("window [{x_min}, {x_max}] too small for truncation radius {radius}")]
    WindowTooSmall { x_min: i64, x_max: i64, radius: usize },

    #[error("truncation radius {radius} leaves tail mass bound {bound:e}, need < {limit:e}")]
    TruncationTooShort { radius: usize, bound: f64, limit: f64 },

    #[error("shift by {shift} leaves the materialized window")]
    ShiftOutOfWindow { shift: i64 },

    #[error("site {site} is within the truncation radius of the window edge")]
    BoundarySite { site: i64 },

    #[error("start {start} has margin {margin} but {required} is required for {steps} steps")]
    MarginTooSmall { start: i64, margin: i64, required: i64, steps: usize },

    #[error("walk left the safe region at step {}", .partial.len())]
    WalkExited { partial: Box<Path> },

    #[error("path has {available} steps, {requested} requested")]
    PathTooShort { available: usize, requested: usize },

    #[error("interval [{a}, {b}] must contain at least three points")]
    IntervalTooShort { a: i64, b: i64 },

    #[error("interval [{a}, {b}] needs margin {radius} inside window [{x_min}, {x_max}]")]
    IntervalMargin { a: i64, b: i64, radius: usize, x_min: i64, x_max: i64 },

    #[error("site {site} is not interior to ({a}, {b})")]
    NotInterior { site: i64, a: i64, b: i64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
