use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument falls outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular regression at step {step}: condition number {condition:.3e} exceeds {limit:.3e}")]
    SingularRegression {
        step: usize,
        condition: f64,
        limit: f64,
    },

    /// A terminal functional or generator produced NaN or an infinity.
    #[error("non-finite value from {source_name} on path {path} at step {step}")]
    NonFinite {
        source_name: String,
        path: usize,
        step: usize,
    },

    #[error("picard iteration did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NotConverged {
        iterations: usize,
        last_change: f64,
        gaps: Vec<f64>,
    },

    /// Evaluating a functional at a bumped path failed.
    #[error("evaluation failed for bump direction {direction} (sign {sign}): {source}")]
    Bump {
        direction: usize,
        sign: i8,
        #[source]
        source: Box<Error>,
    },

    #[error("evaluation of `{name}` failed: {reason}")]
    Evaluation { name: String, reason: String },

    #[error("cascade solver failure ({reason}); mesh nx={nx} ny={ny} steps={steps}")]
    Cascade {
        reason: String,
        nx: usize,
        ny: usize,
        steps: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
