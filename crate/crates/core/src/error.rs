use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("integrator step size underflow at t = {time:e} s")]
    StepSizeFailure { time: f64 },

    #[error("Bloch state left the physical region at t = {time:e} s (excess {excess:e})")]
    InvariantViolation { time: f64, excess: f64 },

    #[error("adaptive quadrature did not converge (achieved error estimate {achieved:e})")]
    QuadratureNotConverged { achieved: f64 },

    #[error("normal matrix is singular; unidentifiable parameter combination: {combination}")]
    RankDeficient { combination: String },

    #[error("correlation curve shows no Rabi oscillation to measure contrast against")]
    NotOscillatory,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Numerical failures (as opposed to bad input) map to CLI exit status 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepSizeFailure { .. }
                | Error::InvariantViolation { .. }
                | Error::QuadratureNotConverged { .. }
                | Error::RankDeficient { .. }
                | Error::NotOscillatory
        )
    }
}
