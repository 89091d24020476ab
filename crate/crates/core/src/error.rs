use thiserror::Error;

use crate::corpuscular::CorpuscularError;
use crate::io::IoError;
use crate::montecarlo::MonteCarloError;
use crate::optics::OpticsError;
use crate::polarization::PolarizationError;
use crate::stats::StatsError;

/// Any failure from the crate, tagged by the module that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
    #[error(transparent)]
    Corpuscular(#[from] CorpuscularError),
    #[error(transparent)]
    MonteCarlo(#[from] MonteCarloError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl Error {
    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io(IoError::File { .. }) => "file",
            Error::Io(IoError::ConfigParse(_)) => "config-parse",
            Error::Io(IoError::UnknownKey(_)) => "config-unknown-key",
            Error::Io(IoError::ConfigValidation(_)) => "config-validation",
            Error::Io(_) => "format",
            Error::Optics(OpticsError::Invalid { .. }) | Error::MonteCarlo(MonteCarloError::Invalid { .. }) => {
                "config-validation"
            }
            Error::Corpuscular(CorpuscularError::Param(..)) => "config-validation",
            Error::Stats(StatsError::NotConverged(_)) => "non-convergence",
            _ => "computation",
        }
    }
}
