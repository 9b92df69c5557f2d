use thiserror::Error;

/// Errors raised by the junta testing toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum JuntaError {
    /// Malformed input: non-finite entries, asymmetric matrices, non-unit directions.
    #[error("invalid input: {0}")]
    Input(String),

    /// A numeric parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A matrix expected to have full rank has a singular value below tolerance.
    #[error("rank deficient: singular value {singular_value:e} below tolerance {tolerance:e}")]
    Degeneracy { singular_value: f64, tolerance: f64 },

    /// Subspace geometry precondition violated (e.g. `||P_E P_{E'^perp}||_2 >= 1`).
    #[error("geometry precondition violated: operator norm {op_norm} (must be < 1)")]
    Geometry { op_norm: f64 },

    /// A hard query budget was hit. `partial` carries whatever estimate was
    /// available when the budget ran out.
    #[error("query budget exhausted: {used} of {budget} queries used")]
    Budget {
        used: u64,
        budget: u64,
        partial: Option<f64>,
    },

    /// Enumeration would exceed the configured cap.
    #[error("{what} has cardinality {cardinality:e}, above cap {cap}")]
    Size {
        what: &'static str,
        cardinality: f64,
        cap: u64,
    },

    /// Requested computation is outside what this implementation supports.
    #[error("unsupported: {0}")]
    Capability(String),
}

impl JuntaError {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        JuntaError::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// Attach a partial estimate to a budget error; other variants pass through.
    pub fn with_partial(self, estimate: f64) -> Self {
        match self {
            JuntaError::Budget { used, budget, .. } => JuntaError::Budget {
                used,
                budget,
                partial: Some(estimate),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, JuntaError>;
