use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DflError>;

#[derive(Debug, Error)]
pub enum DflError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("not calibrated: {0}")]
    NotCalibrated(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl DflError {
    /// Process exit code for this error: 1 for broken internal invariants, 2 for
    /// everything caused by bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            DflError::Invariant(_) => 1,
            _ => 2,
        }
    }
}
