use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("not a Stiefel point: max |x^T x - I| = {deviation:e} exceeds {tolerance:e}")]
    NotOrthonormal { deviation: f64, tolerance: f64 },

    #[error("not a tangent vector: max |x^T v + v^T x| = {deviation:e} exceeds {tolerance:e}")]
    NotTangent { deviation: f64, tolerance: f64 },

    #[error(
        "Euclidean mean is rank deficient (smallest singular value {smallest:e}, largest {largest:e})"
    )]
    DegenerateMean { smallest: f64, largest: f64 },

    #[error("degenerate mean at iteration {iteration}: {source}")]
    DegenerateAt {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid mixing matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("stepsize alpha = {alpha} exceeds the admissible maximum {alpha_bar}")]
    Stepsize { alpha: f64, alpha_bar: f64 },

    #[error("{path}:{line}: {reason}")]
    Ingestion {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(
        context: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures caused by a rank-deficient Euclidean mean.
    pub fn is_degenerate_mean(&self) -> bool {
        matches!(self, Error::DegenerateMean { .. } | Error::DegenerateAt { .. })
    }
}
