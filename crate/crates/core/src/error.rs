use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem spec: {reason}")]
    Spec { reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("inner solver stalled after {iterations} iterations (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})")]
    SolverStall {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error("state {state:?} is outside the feasible set of initial states")]
    OutsideFeasibleSet { state: Vec<f64> },

    #[error("lattice index {index:?} is not covered by the stored model values")]
    CoverageMiss { index: Vec<i64> },

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("spec hash mismatch: artifact was built for {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },

    #[error("training diverged at epoch {epoch} (loss {loss:.3e})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("network sizing: {0}")]
    Sizing(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn spec(reason: impl Into<String>) -> Self {
        Error::Spec {
            reason: reason.into(),
        }
    }
}
