use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("weighted design matrix is rank deficient at area {area}")]
    RankDeficient { area: usize },

    #[error(
        "effective kernel weight {total:.4} at area {area} is below the {required} required; use a larger bandwidth"
    )]
    InsufficientWeight {
        area: usize,
        total: f64,
        required: f64,
    },

    #[error("local fit failed at area {area}: {reason}")]
    FitFailed { area: usize, reason: String },

    #[error("all {0} area fits failed")]
    AllAreasFailed(usize),

    #[error("{failed} of {total} replicates failed (limit is 10%)")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Area index an error refers to, when it is tied to one area.
    pub fn area(&self) -> Option<usize> {
        match self {
            Error::RankDeficient { area }
            | Error::InsufficientWeight { area, .. }
            | Error::FitFailed { area, .. } => Some(*area),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
