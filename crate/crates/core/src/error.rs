use std::io;

/// Errors raised by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("kernel rows missing: level {needed} requested but only {available} computed")]
    MissingRows { needed: usize, available: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("missing history: level {level} requires accepted levels 0..{level}, have {available}")]
    MissingHistory { level: usize, available: usize },

    #[error("step {tau:e} at level {level} exceeds the solvability cap {cap:e}")]
    StepCapExceeded { level: usize, tau: f64, cap: f64 },

    #[error(
        "fixed-point iteration failed at level {level}: residual {residual:e} after {iterations} iterations"
    )]
    FixedPointFailed {
        level: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
