use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("iterate diverged at iteration {iteration}")]
    Diverged { iteration: u64 },

    #[error("kernel matrix is not positive semidefinite (squared norm {value:e})")]
    KernelPsd { value: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("query {0:?} was not registered before training")]
    MustRegister(Vec<f64>),

    #[error("refused: {0}")]
    Refused(String),

    #[error("experiment failed: all {runs} runs diverged")]
    ExperimentFailed { runs: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
