use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{leftout_metrics, PredictiveRow, ValidationError, ValidationReport};
use crate::data::{ObservationSet, TfrAnchors};
use crate::likelihood::DEFAULT_VARIANCE_FLOOR;
use crate::mcmc::names;
use crate::model::dist::{inv_logit, sample_trunc_t3_lower, sample_truncnorm_lower, std_normal};
use crate::model::{omega_at, TransitionParams};
use crate::projection::{FitDraws, ProjectionError};
use crate::quantile::Summary;
use crate::GRID_END;

/// Last year whose fluctuations come from the fit; later years are predicted.
pub const PREDICTION_START: i32 = 1970;

struct Hyper<'a> {
    mu_pi: &'a [f64],
    sigma_pi: &'a [f64],
    mu_xi: &'a [f64],
    sigma_xi: &'a [f64],
    mu_lambda: [&'a [f64]; 3],
    sigma_lambda: [&'a [f64]; 3],
    sigma_gamma: &'a [f64],
}

fn column<'a>(fit: &'a FitDraws, name: &str) -> Result<&'a [f64], ValidationError> {
    fit.draws
        .get(name)
        .ok_or_else(|| ValidationError::MissingHyperDraws(name.to_string()))
}

impl<'a> Hyper<'a> {
    fn from_fit(m2: &'a FitDraws) -> Result<Self, ValidationError> {
        let lam = |f: fn(usize) -> String| -> Result<[&'a [f64]; 3], ValidationError> {
            Ok([column(m2, &f(1))?, column(m2, &f(2))?, column(m2, &f(3))?])
        };
        Ok(Hyper {
            mu_pi: column(m2, names::MU_PI)?,
            sigma_pi: column(m2, names::SIGMA_PI)?,
            mu_xi: column(m2, names::MU_XI)?,
            sigma_xi: column(m2, names::SIGMA_XI)?,
            mu_lambda: lam(names::mu_lambda)?,
            sigma_lambda: lam(names::sigma_lambda)?,
            sigma_gamma: column(m2, names::SIGMA_GAMMA)?,
        })
    }

    /// A transition drawn from the hyper-posterior predictive, or `None`
    /// when the simulated indicator is off.
    fn draw<R: Rng + ?Sized>(
        &self,
        g: usize,
        a: &TfrAnchors,
        rng: &mut R,
    ) -> Option<TransitionParams> {
        let pi = inv_logit(self.mu_pi[g] + self.sigma_pi[g] * std_normal(rng));
        if rng.random::<f64>() >= pi {
            return None;
        }
        let gamma0 = sample_trunc_t3_lower(rng, a.x as f64, self.sigma_gamma[g], a.z as f64);
        let mut lambda = [0.0; 3];
        for (k, l) in lambda.iter_mut().enumerate() {
            *l = sample_truncnorm_lower(rng, self.mu_lambda[k][g], self.sigma_lambda[k][g], 0.0);
        }
        let xi = sample_truncnorm_lower(rng, self.mu_xi[g], self.sigma_xi[g], 0.0);
        Some(TransitionParams::new(
            gamma0, lambda[0], lambda[1], lambda[2], xi, true,
        ))
    }
}

/// Predictive summaries of every at-risk observation after 1970. The
/// baseline and autocorrelation come from `m1`; fluctuations up to 1970,
/// the transition hyperparameters and the non-sampling error come from
/// `m2`. Both fits must hold the same number of draws.
pub fn predictions_from_1970(
    m1: &FitDraws,
    m2: &FitDraws,
    at_risk: &ObservationSet,
    anchors: &BTreeMap<String, TfrAnchors>,
    seed: u64,
) -> Result<Vec<PredictiveRow>, ValidationError> {
    let n = m1.n_draws();
    if m2.n_draws() != n {
        return Err(ProjectionError::DrawCountMismatch {
            expected: n,
            found: m2.n_draws(),
        }
        .into());
    }
    let hyper = Hyper::from_fit(m2)?;
    let test = at_risk.filtered(|o| o.grid_year() > PREDICTION_START);
    if let Some(o) = test.iter().find(|o| o.grid_year() > GRID_END) {
        return Err(ValidationError::MissingYear(o.grid_year()));
    }
    let countries = test.countries();
    let rows = countries
        .par_iter()
        .enumerate()
        .map(|(i, code)| {
            let anchor = anchors
                .get(code)
                .ok_or_else(|| ValidationError::MissingAnchors(code.clone()))?;
            let baseline = m1.view(code)?;
            let eta = m2.view(code)?;
            let obs: Vec<_> = test.for_country(code).collect();
            let last_year = obs
                .iter()
                .map(|o| o.grid_year())
                .max()
                .unwrap_or(PREDICTION_START);
            let known_end = (*eta.eta_years().end()).min(PREDICTION_START);
            let omega: Vec<Option<&[f64]>> = obs
                .iter()
                .map(|o| {
                    o.source_type
                        .has_nonsampling_error()
                        .then(|| column(m2, &names::omega(o.source_type)))
                        .transpose()
                })
                .collect::<Result<_, _>>()?;

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut draws = vec![Vec::with_capacity(n); obs.len()];
            let mut path = vec![0.0; (last_year - known_end) as usize + 1];
            for g in 0..n {
                let tp = hyper.draw(g, anchor, &mut rng);
                let (rho, sigma) = m1.phi(g)?;
                path[0] = eta.eta(g, known_end).expect("stored year").ln();
                for k in 1..path.len() {
                    path[k] = rho * path[k - 1] + sigma * std_normal(&mut rng);
                }
                let beta = baseline.beta(g);
                for (j, o) in obs.iter().enumerate() {
                    let t = o.grid_year();
                    let infl = tp.as_ref().map_or(0.0, |tp| omega_at(tp, t as f64));
                    let theta = beta * path[(t - known_end) as usize].exp() + infl;
                    let w = omega[j].map_or(0.0, |c| c[g]);
                    let sd = (w * w + o.sampling_sd * o.sampling_sd)
                        .max(DEFAULT_VARIANCE_FLOOR)
                        .sqrt();
                    draws[j].push((theta.ln() + sd * std_normal(&mut rng)).exp());
                }
            }
            Ok(obs
                .iter()
                .zip(draws)
                .map(|(o, d)| PredictiveRow {
                    country_code: o.country_code.clone(),
                    year: o.year,
                    y: o.value,
                    ppd: Summary::from_draws(&d),
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ValidationError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Scores [`predictions_from_1970`] with the left-out metrics.
pub fn predict_from_1970(
    m1: &FitDraws,
    m2: &FitDraws,
    at_risk: &ObservationSet,
    anchors: &BTreeMap<String, TfrAnchors>,
    n_sets: usize,
    seed: u64,
) -> Result<ValidationReport, ValidationError> {
    let rows = predictions_from_1970(m1, m2, at_risk, anchors, seed)?;
    let metrics = leftout_metrics(&rows, n_sets, seed)?;
    Ok(ValidationReport {
        label: "prediction_from_1970".into(),
        n_train_countries: at_risk.countries().len(),
        n_full_countries: at_risk.countries().len(),
        leftout: Some(metrics),
        estimates: Vec::new(),
    })
}
