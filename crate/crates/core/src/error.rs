use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum KmacError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row count mismatch: x has {x} rows, y has {y} rows")]
    RowMismatch { x: usize, y: usize },

    #[error("graph has {graph} vertices but the sample has {sample} rows")]
    GraphSizeMismatch { graph: usize, sample: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid spec string {spec:?}: {reason}")]
    InvalidSpec { spec: String, reason: String },

    #[error("sample too small: need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate Y marginal: denominator {denominator:e} is not positive")]
    DegenerateY { denominator: f64 },

    #[error("degenerate X sample: all points coincide")]
    DegenerateX,

    #[error("variance estimate {s2:e} is too small for the asymptotic test; use permutation calibration")]
    DegenerateVariance { s2: f64 },

    #[error("variance estimate degenerate in {count} of {reps} replicates")]
    FrequentDegeneracy { count: usize, reps: usize },

    #[error("index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("assignment size {n} exceeds the cap {cap}; raise the cap explicitly to proceed")]
    AssignmentTooLarge { n: usize, cap: usize },

    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KmacError {
    pub(crate) fn spec(spec: &str, reason: impl Into<String>) -> Self {
        KmacError::InvalidSpec {
            spec: spec.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by degenerate data rather than bad configuration.
    pub fn is_degenerate_data(&self) -> bool {
        matches!(
            self,
            KmacError::DegenerateY { .. }
                | KmacError::DegenerateX
                | KmacError::DegenerateVariance { .. }
                | KmacError::FrequentDegeneracy { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, KmacError>;
