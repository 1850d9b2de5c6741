use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is disconnected")]
    DisconnectedGraph,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate layer: {0}")]
    DegenerateLayer(String),

    #[error("degenerate relation: {0}")]
    Degenerate(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("calibration class {0} has no samples")]
    EmptyCalibrationClass(usize),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("truncated input at byte {offset}: needed {needed} more bytes")]
    Truncated { offset: u64, needed: u64 },

    #[error("bad magic number {found:#x} (expected {expected:#x})")]
    BadMagic { expected: u32, found: u32 },

    #[error("unsupported checkpoint version {0}")]
    Version(u32),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("mask constraint violated: {0}")]
    Constraint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for errors caused by bad user input (configs, flags) rather than
    /// by a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParameter(_))
    }
}
