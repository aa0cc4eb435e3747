use thiserror::Error;

/// Errors raised by the simulators and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid under-resolved: {0}")]
    UnderResolvedGrid(String),

    #[error("cavity divergence: sqrt(R1*R2)*exp(-alpha_eff) = {round_trip} is not below 1")]
    CavityDivergence { round_trip: f64 },

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("ill-conditioned inversion: {0}")]
    IllConditioned(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by user input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::UnderResolvedGrid(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
