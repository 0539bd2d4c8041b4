use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sequence must contain at least one frame")]
    EmptySequence,

    #[error("at least {required} frames required, got {actual}")]
    InsufficientFrames { required: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed stream: {0}")]
    Format(String),

    #[error("stream truncated in frame {frame}: {detail}")]
    Truncated { frame: usize, detail: String },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("external tool `{command}` failed ({status}): {stderr}")]
    ExternalTool {
        command: String,
        status: String,
        stderr: String,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("window starting at frame {start} lies outside a {frames}-frame sequence")]
    Window { start: usize, frames: usize },

    #[error("invalid fusion plan: {0}")]
    PlanValidity(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable identifier, used for CLI error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::EmptySequence => "empty-sequence",
            Error::InsufficientFrames { .. } => "insufficient-frames",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Format(_) => "format",
            Error::Truncated { .. } => "truncated",
            Error::Unsupported(_) => "unsupported-format",
            Error::ExternalTool { .. } => "external-tool",
            Error::Protocol(_) => "protocol",
            Error::Window { .. } => "window",
            Error::PlanValidity(_) => "plan-validity",
            Error::Io(e) if e.kind() == io::ErrorKind::NotFound => "input-not-found",
            Error::Io(_) => "io",
        }
    }
}
