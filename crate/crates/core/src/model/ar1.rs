use log::warn;
use rand::Rng;

use super::{dist, ModelError};

/// Largest autocorrelation the sampler and projections accept.
pub const RHO_CAP: f64 = 0.999;

/// Standard deviation of the first log fluctuation, the stationary sd
/// `σ_ε / √(1 − ρ²)` of the AR(1). Values of ρ in `(0.999, 1)` are capped.
pub fn ar1_initial_log_sd(rho: f64, sigma_eps: f64) -> Result<f64, ModelError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(ModelError::RhoOutOfRange(rho));
    }
    let rho = if rho > RHO_CAP {
        warn!("autocorrelation {rho} capped at {RHO_CAP}");
        RHO_CAP
    } else {
        rho
    };
    Ok(stationary_log_sd(rho, sigma_eps))
}

/// Unchecked version of [`ar1_initial_log_sd`] for the hot loops.
#[inline]
pub fn stationary_log_sd(rho: f64, sigma_eps: f64) -> f64 {
    sigma_eps / (1.0 - rho * rho).sqrt()
}

/// Simulates `horizon` further values of η after `eta_last`:
/// `log η_{t+1} = ρ log η_t + ε`, `ε ~ N(0, σ_ε²)`.
pub fn eta_project<R: Rng + ?Sized>(
    eta_last: f64,
    rho: f64,
    sigma_eps: f64,
    horizon: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut log_eta = eta_last.ln();
    (0..horizon)
        .map(|_| {
            log_eta = rho * log_eta + sigma_eps * dist::std_normal(rng);
            log_eta.exp()
        })
        .collect()
}
