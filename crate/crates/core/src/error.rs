use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate wealth: X(t) = 0 at decision index {index}")]
    DegenerateWealth { index: usize },

    #[error("eta iteration did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("indifference probability {p} is outside the model range ({lower}, 1)")]
    OutOfModel { p: f64, lower: f64 },

    #[error("attribute out of range: {0}")]
    OutOfRange(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("correlation undefined: {0} path is constant")]
    UndefinedCorrelation(&'static str),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("undefined baseline: reduction relative to a zero pre-value")]
    UndefinedBaseline,

    #[error("class sets differ (missing on left: {missing_left:?}; missing on right: {missing_right:?})")]
    ClassMismatch {
        missing_left: Vec<(usize, usize)>,
        missing_right: Vec<(usize, usize)>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::ConvergenceFailure { .. })
    }
}
