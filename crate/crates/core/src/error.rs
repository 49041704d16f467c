use thiserror::Error;

/// Errors raised by the operator-algebra routines.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("algebra mismatch: expected block dims {expected:?}, found {found:?}")]
    SpecMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("degree {degree} outside the supported range (limit {limit})")]
    DegreeOverflow { degree: i64, limit: i64 },

    #[error("Choi side {side} exceeds cap {cap}; use positivity_probe instead")]
    CapExceeded { side: usize, cap: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("structural failure: {0}")]
    Structure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> LabError {
    LabError::Shape {
        op,
        detail: detail.into(),
    }
}
