//! Country classification and scenario trajectories to 2100.

mod assemble;
mod classify;
mod summary;

use thiserror::Error;

pub use assemble::{
    align_draws, assemble_countries, assemble_scenario, fit_paths, inject_tfr_start_uncertainty,
    last_observation_years, CountryTrajectory, FitDraws, ScenarioFits, ScenarioTrajectories,
    SrbPaths,
};
pub use classify::{classify, compute_psi, CountryClass, CountryClassification, PSI_THRESHOLD};
pub use summary::{summarize, write_scenario_csv, ScenarioSummaryRow, SCENARIO_HEADER};

use crate::mcmc::McmcError;
use crate::model::{ModelError, ModelKind};

/// Default number of draws every fit is aligned to before assembly.
pub const DEFAULT_DRAWS: usize = 4000;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("no inflation probability for at-risk country {0}")]
    MissingPsi(String),
    #[error("scenario needs the {model} fit for {country}")]
    MissingFit { country: String, model: ModelKind },
    #[error("fits hold {found} draws where {expected} are required")]
    DrawCountMismatch { expected: usize, found: usize },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub enum Scenario {
    S1,
    S2,
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = ProjectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Scenario::S1),
            "S2" => Ok(Scenario::S2),
            "S3" => Ok(Scenario::S3),
            _ => Err(ProjectionError::UnknownScenario(s.to_string())),
        }
    }
}
