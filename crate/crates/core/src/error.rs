use thiserror::Error;

/// Errors raised by the simulation, detector and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration failed validation. Every violated field is listed.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    /// No interior density minimum exists between two neighbouring photon peaks.
    #[error("threshold calibration failed between the {lower}- and {upper}-photon peaks: {reason}")]
    Calibration { lower: usize, upper: usize, reason: String },

    #[error("linear system is singular or ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    /// Malformed interchange file. `line` is 1-based.
    #[error("{context}, line {line}: {message}")]
    Schema {
        context: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn schema(context: &str, line: u64, message: impl Into<String>) -> Self {
        Error::Schema {
            context: context.to_string(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
