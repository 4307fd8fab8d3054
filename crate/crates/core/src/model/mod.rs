//! Structural model: baselines, AR(1) fluctuations, the trapezoid transition,
//! the inflation indicator, priors, and assembly of Θ for every model variant.

mod ar1;
pub mod dist;
mod params;
pub(crate) mod prior;
mod theta;
mod trapezoid;

use thiserror::Error;

pub use ar1::{ar1_initial_log_sd, eta_project, stationary_log_sd, RHO_CAP};
pub use params::{
    BaselineParams, CountrySlot, EtaPath, FixedInputs, FluctuationParams, ModelKind, ModelLayout,
    ModelParams, ModelSpec, Phi, TransitionHyper, TransitionParams, ZetaHat,
};
pub use prior::{
    bounds, eta_path_term, gamma0_term, log_prior, omega_term, positive_term, prior_terms,
    transition_term, zeta_hyper_term, PriorTerms,
};
pub use theta::theta_assemble;
pub use trapezoid::omega_at;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("model {kind} requires fixed input `{input}`")]
    MissingFixedInput { kind: ModelKind, input: String },
    #[error("autocorrelation must lie in [0, 1), got {0}")]
    RhoOutOfRange(f64),
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
}
