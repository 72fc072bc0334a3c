use crate::dynamics::RotorState;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(
        "integration diverged near t = {:.6e} s; last finite state: alpha = {:.6e} rad, omega = {:.6e} rad/s",
        last.time, last.alpha, last.omega
    )]
    Diverged { last: RotorState },

    #[error("analysis window is not 1:2-locked: fitted slope deviates from pi*f_d by {rel_dev:.3e} (tolerance {tol:.1e})")]
    WindowNotLocked { rel_dev: f64, tol: f64 },

    #[error("analysis window ({requested} periods) exceeds the trajectory ({available} periods)")]
    WindowTooLong { requested: u64, available: u64 },

    #[error("fit failed to converge after {iterations} iterations (residual {residual:.3e})")]
    FitDidNotConverge { iterations: usize, residual: f64 },

    #[error("inferred pressure is negative ({pressure:.3e} Pa): phase/parameter set is outside the model")]
    OutOfModel { pressure: f64 },

    #[error("operating point is not lockable: {message}")]
    NotLockable { message: String },

    #[error("malformed {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error("{message}")]
    Unsupported { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(what: &'static str, message: impl Into<String>) -> Self {
        Error::Parse {
            what,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
