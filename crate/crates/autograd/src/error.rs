use thiserror::Error;

use crate::tensor::Shape;

#[derive(Debug, Error, PartialEq)]
pub enum AutogradError {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: Shape,
        got: Shape,
    },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("backward requires a scalar loss, got shape {0}")]
    NotScalar(Shape),
    #[error("malformed parameter blob: {0}")]
    Blob(String),
}

pub type Result<T> = std::result::Result<T, AutogradError>;
