//! Posterior sampling, convergence diagnostics and chain stacking.

mod chains;
mod config;
mod diagnostics;
pub(crate) mod kalman;
mod loo;
mod sampler;
mod stacking;
mod summary;
mod view;

use thiserror::Error;

pub use chains::{
    names, omega_names, read_chains_csv, write_chains_csv, DrawSet, FitMetadata, PosteriorChains,
    StackingInfo, CHAINS_HEADER,
};
pub use config::McmcConfig;
pub use diagnostics::{gelman_rubin, gelman_rubin_values, psrf_table};
pub use loo::{loo_from_loglik, loo_pointwise, pointwise_log_lik, LooResult};
pub use sampler::{fit, FitInputs};
pub use stacking::{
    gamma0_spread, maximize_stacking_weights, stack_chains, stacking_triggered, StackedPosterior,
    StackingTrace, STACKING_TRIGGER_YEARS,
};
pub use summary::{fixed_inputs_from_m1, point_estimates, zeta_hat_from_m2, ParamSummary};
pub use view::CountryDraws;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("invalid MCMC configuration: {0}")]
    InvalidConfig(String),
    #[error("no observations for any country in the scope of the fit")]
    NoData,
    #[error("unknown country {0}")]
    UnknownCountry(String),
    #[error("fertility anchors missing for {0}")]
    MissingAnchors(String),
    #[error("non-finite value for {0}")]
    NonFiniteDensity(String),
    #[error("draw of {0} outside its prior support")]
    SupportViolation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("need at least 2 chains, got {0}")]
    TooFewChains(usize),
    #[error("need at least 10 draws per chain, got {0}")]
    TooFewDraws(usize),
    #[error("within-chain variance of {0} is zero")]
    ZeroVariance(String),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("importance weights overflow for observation {observation}")]
    NumericalOverflow { observation: usize },
    #[error("every chain gives zero predictive density for observation {observation}")]
    DegenerateObjective { observation: usize },
    #[error("chain file: {0}")]
    ChainFile(String),
}
