use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::chains::{names, DrawSet};
use super::McmcError;
use crate::data::CountryRegistry;
use crate::model::{FixedInputs, Phi, ZetaHat};
use crate::quantile::{median, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    #[serde(flatten)]
    pub quantiles: Summary,
}

/// Posterior median, mean and equal-tail intervals of each requested
/// parameter (all parameters when `params` is empty).
pub fn point_estimates(
    draws: &DrawSet,
    params: &[&str],
) -> Result<BTreeMap<String, ParamSummary>, McmcError> {
    let all: Vec<&str>;
    let params = if params.is_empty() {
        all = draws.names().iter().map(String::as_str).collect();
        &all
    } else {
        params
    };
    params
        .iter()
        .map(|&p| {
            let v = draws
                .get(p)
                .ok_or_else(|| McmcError::UnknownParameter(p.to_string()))?;
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            Ok((
                p.to_string(),
                ParamSummary {
                    mean,
                    quantiles: Summary::from_draws(v),
                },
            ))
        })
        .collect()
}

fn median_of(draws: &DrawSet, name: &str) -> Result<f64, McmcError> {
    draws
        .get(name)
        .map(median)
        .ok_or_else(|| McmcError::UnknownParameter(name.to_string()))
}

/// Posterior medians of the baseline fit that later stages hold fixed:
/// country and regional baselines (the latter keyed by country), the
/// baseline spread and the AR(1) parameters.
pub fn fixed_inputs_from_m1(
    draws: &DrawSet,
    registry: &CountryRegistry,
) -> Result<FixedInputs, McmcError> {
    let mut fixed = FixedInputs {
        phi_hat: Some(Phi {
            rho: median_of(draws, names::RHO)?,
            sigma_eps: median_of(draws, names::SIGMA_EPS)?,
        }),
        sigma_beta_hat: Some(median_of(draws, names::SIGMA_BETA)?),
        ..FixedInputs::default()
    };
    for c in registry.countries() {
        fixed
            .beta_hat
            .insert(c.code.clone(), median_of(draws, &names::beta(&c.code))?);
        fixed.beta_region_hat.insert(
            c.code.clone(),
            median_of(draws, &names::beta_region(&c.region_code))?,
        );
    }
    Ok(fixed)
}

/// Posterior medians of the transition hyperparameters of an inflation fit.
pub fn zeta_hat_from_m2(draws: &DrawSet) -> Result<ZetaHat, McmcError> {
    let lam = |f: fn(usize) -> String| -> Result<[f64; 3], McmcError> {
        Ok([
            median_of(draws, &f(1))?,
            median_of(draws, &f(2))?,
            median_of(draws, &f(3))?,
        ])
    };
    Ok(ZetaHat {
        mu_xi: median_of(draws, names::MU_XI)?,
        sigma_xi: median_of(draws, names::SIGMA_XI)?,
        mu_lambda: lam(names::mu_lambda)?,
        sigma_lambda: lam(names::sigma_lambda)?,
        sigma_gamma: median_of(draws, names::SIGMA_GAMMA)?,
    })
}
