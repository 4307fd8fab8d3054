use std::collections::HashMap;

use super::chains::{names, PosteriorChains};
use super::view::CountryDraws;
use super::McmcError;
use crate::data::{ObservationSet, SourceType};
use crate::likelihood::DEFAULT_VARIANCE_FLOOR;
use crate::model::dist::{log_sum_exp, normal_ln_pdf_var};

/// Largest normalized importance weight tolerated before a point is flagged.
const MAX_WEIGHT: f64 = 0.2;
/// Below this many draws the weight check is not informative.
const MIN_DRAWS_FOR_FLAG: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LooResult {
    /// `log f(y_i | y_-i)` per observation.
    pub log_density: Vec<f64>,
    /// Observations whose importance weights are dominated by a single draw.
    pub unstable: Vec<usize>,
}

impl LooResult {
    pub fn density(&self) -> Vec<f64> {
        self.log_density.iter().map(|l| l.exp()).collect()
    }
}

/// Harmonic-mean importance-sampling LOO from `loglik[obs][draw]`.
pub fn loo_from_loglik(loglik: &[Vec<f64>]) -> Result<LooResult, McmcError> {
    let mut log_density = Vec::with_capacity(loglik.len());
    let mut unstable = Vec::new();
    let mut neg = Vec::new();
    for (i, row) in loglik.iter().enumerate() {
        let g = row.len();
        neg.clear();
        neg.extend(row.iter().map(|l| -l));
        if neg.contains(&f64::INFINITY) {
            // A draw gives the observation zero density.
            log_density.push(f64::NEG_INFINITY);
            unstable.push(i);
            continue;
        }
        let lse = log_sum_exp(&neg);
        if lse.is_nan() || g == 0 {
            return Err(McmcError::NumericalOverflow { observation: i });
        }
        log_density.push((g as f64).ln() - lse);
        if g >= MIN_DRAWS_FOR_FLAG {
            let max_w = neg.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - lse;
            if !lse.is_finite() || max_w.exp() > MAX_WEIGHT {
                unstable.push(i);
            }
        }
    }
    Ok(LooResult {
        log_density,
        unstable,
    })
}

/// Per-observation log likelihood of each draw of chain `k`, in the order of
/// `data`. Observations of countries outside the fit are skipped.
pub fn pointwise_log_lik(
    chains: &PosteriorChains,
    k: usize,
    data: &ObservationSet,
) -> Result<Vec<Vec<f64>>, McmcError> {
    let draws = &chains.chains[k];
    let views: HashMap<&str, CountryDraws<'_>> = chains
        .layout
        .slots
        .iter()
        .map(|s| Ok((s.code.as_str(), CountryDraws::new(draws, &chains.spec, s)?)))
        .collect::<Result<_, McmcError>>()?;
    let mut omega_cols = [None; 5];
    for s in SourceType::ALL
        .into_iter()
        .filter(|s| s.has_nonsampling_error())
    {
        let name = names::omega(s);
        omega_cols[s.index()] = Some(
            draws
                .index_of(&name)
                .ok_or(McmcError::UnknownParameter(name))?,
        );
    }
    let g_total = draws.len();
    let mut out = Vec::with_capacity(data.len());
    for o in data {
        let Some(view) = views.get(o.country_code.as_str()) else {
            continue;
        };
        let year = o.grid_year();
        let ly = o.value.ln();
        let v2 = o.sampling_sd * o.sampling_sd;
        let row = (0..g_total)
            .map(|g| {
                let theta = view.theta(g, year).ok_or_else(|| {
                    McmcError::ChainFile(format!(
                        "no fluctuation draw for {} in {year}",
                        o.country_code
                    ))
                })?;
                let w = omega_cols[o.source_type.index()].map_or(0.0, |c| draws.column(c)[g]);
                Ok(normal_ln_pdf_var(
                    ly,
                    theta.ln(),
                    (w * w + v2).max(DEFAULT_VARIANCE_FLOOR),
                ))
            })
            .collect::<Result<Vec<f64>, McmcError>>()?;
        out.push(row);
    }
    Ok(out)
}

/// LOO predictive densities of chain `k`.
pub fn loo_pointwise(
    chains: &PosteriorChains,
    k: usize,
    data: &ObservationSet,
) -> Result<LooResult, McmcError> {
    loo_from_loglik(&pointwise_log_lik(chains, k, data)?)
}
