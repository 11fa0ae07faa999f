use std::path::PathBuf;

/// Errors raised by the herding solvers and their I/O layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e} at column {column}"
    )]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("step size underflow at t = {t}: required step {step:.3e} is below {min_step:.3e}")]
    StepSizeUnderflow { t: f64, step: f64, min_step: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("collocation mesh exceeded {max_nodes} nodes")]
    MaxNodesExceeded { max_nodes: usize },

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("shooting diverged after {iterations} iterations: {reason}")]
    Diverged { iterations: usize, reason: String },

    #[error("shooting exhausted {iterations} iterations (terminal costate norm {residual:.3e})")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("LQR controller stalled: {0}")]
    ControllerStalled(String),

    #[error("trajectory node {node} has no control block")]
    MissingControls { node: usize },

    #[error("parse error in {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
