use thiserror::Error;

/// Errors raised by the simulator.
///
/// Most variants are fatal for the run that produced them: the run aborts and
/// the diagnostic names the worker and server iteration involved.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at iteration {iteration}: {what}")]
    NonFinite { iteration: u64, what: String },

    #[error(
        "delay invariant breached at iteration {iteration} for worker {worker}: \
         tau={tau} d={d} (need tau >= d + 1 and 1 <= tau <= t)"
    )]
    DelayInvariant {
        worker: usize,
        iteration: u64,
        tau: u64,
        d: u64,
    },

    #[error("sample stream (worker {worker}, epoch {epoch}) consumed twice")]
    StreamReuse { worker: usize, epoch: u64 },

    #[error("worker {worker} out of range for {n} workers")]
    UnknownWorker { worker: usize, n: usize },

    #[error("trace mismatch at iteration {iteration}: {reason}")]
    TraceMismatch { iteration: u64, reason: String },

    #[error("aggregate curvature matrix is singular after {attempts} attempts")]
    Singular { attempts: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stepsize formula undefined for sigma=0; supply eta explicitly")]
    ZeroNoiseStepsize,

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Iteration index carried by numeric failures, if any.
    pub fn iteration(&self) -> Option<u64> {
        match self {
            Error::NonFinite { iteration, .. }
            | Error::DelayInvariant { iteration, .. }
            | Error::TraceMismatch { iteration, .. } => Some(*iteration),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
