use thiserror::Error;

/// Errors produced anywhere in the calibration stack.
#[derive(Debug, Error)]
pub enum CalError {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Degenerate geometry such as a UE co-located with the base station.
    #[error("degenerate geometry: {0}")]
    Geometry(String),

    /// A numerical routine produced a non-finite value or failed to converge.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// The loss became non-finite during calibration. The trace up to the
    /// failure is kept for diagnosis.
    #[error("calibration diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        trace: Vec<crate::calibration::LossRecord>,
    },

    /// Pseudo-true estimation failed for one evaluation angle.
    #[error("pseudo-true estimation failed at evaluation angle {index}: {source}")]
    AngleFailure {
        index: usize,
        #[source]
        source: Box<CalError>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch: manifest says {expected}, payload hashes to {actual}")]
    Checksum { expected: String, actual: String },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CalError> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CalError::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
