use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular Newton system at iteration {iteration}")]
    SingularSystem { iteration: usize },

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NotConverged {
        iterations: usize,
        last_change: f64,
        /// Last iterate, flattened row-major.
        last_iterate: Vec<f64>,
        /// Objective values recorded before giving up (empty when the
        /// routine does not track one).
        trace: Vec<f64>,
    },

    #[error("task {task}: {source}")]
    Task {
        task: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("task {task} has zero response variance")]
    ZeroVariance { task: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn in_task(self, task: usize) -> Self {
        Error::Task {
            task,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
