//! Observation model: `log y ~ N(log Θ, ω_s² + v²)`.

use std::collections::HashMap;

use thiserror::Error;

use crate::data::{Observation, ObservationSet, SourceType};
use crate::model::dist::normal_ln_pdf_var;

/// Default floor on the total variance. Registration rows may arrive with a
/// zero sampling sd.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum LikelihoodError {
    #[error("total variance is zero for a {0} observation and no variance floor is set")]
    ZeroTotalVariance(SourceType),
    #[error("SRB must be positive, got {0}")]
    NonPositiveTheta(f64),
    #[error("no SRB value for {country} in {year}")]
    MissingTheta { country: String, year: i32 },
    #[error("non-sampling error for {source_type} must lie in [0, 0.5], got {value}")]
    InvalidOmega { source_type: SourceType, value: f64 },
}

/// Non-sampling standard deviations per source type (log scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    omega: [f64; 5],
    pub variance_floor: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel {
            omega: [0.0; 5],
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

impl ErrorModel {
    /// `omega` is indexed by [`SourceType::index`]; the registration entry
    /// must be zero and the others within the prior support [0, 0.5].
    pub fn new(omega: [f64; 5]) -> Result<Self, LikelihoodError> {
        for s in SourceType::ALL {
            let v = omega[s.index()];
            let ok = if s.has_nonsampling_error() {
                (0.0..=0.5).contains(&v)
            } else {
                v == 0.0
            };
            if !ok {
                return Err(LikelihoodError::InvalidOmega {
                    source_type: s,
                    value: v,
                });
            }
        }
        Ok(ErrorModel {
            omega,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        })
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.variance_floor = floor;
        self
    }

    pub fn omega(&self, s: SourceType) -> f64 {
        self.omega[s.index()]
    }

    pub fn as_array(&self) -> [f64; 5] {
        self.omega
    }

    pub fn total_variance(&self, y: &Observation) -> Result<f64, LikelihoodError> {
        let w = self.omega(y.source_type);
        let var = w * w + y.sampling_sd * y.sampling_sd;
        if var == 0.0 && self.variance_floor <= 0.0 {
            return Err(LikelihoodError::ZeroTotalVariance(y.source_type));
        }
        Ok(var.max(self.variance_floor))
    }
}

/// Log density of one observation given the SRB `theta`.
pub fn obs_log_density(
    y: &Observation,
    theta: f64,
    em: &ErrorModel,
) -> Result<f64, LikelihoodError> {
    if theta <= 0.0 || !theta.is_finite() {
        return Err(LikelihoodError::NonPositiveTheta(theta));
    }
    let var = em.total_variance(y)?;
    Ok(normal_ln_pdf_var(y.value.ln(), theta.ln(), var))
}

/// SRB values per (country, calendar year).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThetaField {
    values: HashMap<(String, i32), f64>,
}

impl ThetaField {
    pub fn insert(&mut self, country: &str, year: i32, theta: f64) {
        self.values.insert((country.to_string(), year), theta);
    }

    pub fn get(&self, country: &str, year: i32) -> Option<f64> {
        self.values.get(&(country.to_string(), year)).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn total_log_likelihood(
    obs: &ObservationSet,
    theta: &ThetaField,
    em: &ErrorModel,
) -> Result<f64, LikelihoodError> {
    let mut total = 0.0;
    for y in obs {
        let year = y.grid_year();
        let th = theta
            .get(&y.country_code, year)
            .ok_or_else(|| LikelihoodError::MissingTheta {
                country: y.country_code.clone(),
                year,
            })?;
        total += obs_log_density(y, th, em)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn obs(value: f64, source: SourceType, sd: f64) -> Observation {
        Observation {
            country_code: "X".into(),
            year: 2000.0,
            value,
            source_type: source,
            sampling_sd: sd,
        }
    }

    fn em_with(s: SourceType, w: f64) -> ErrorModel {
        let mut o = [0.0; 5];
        o[s.index()] = w;
        ErrorModel::new(o).unwrap()
    }

    #[test]
    fn density_at_mode() {
        let y = obs(1.05, SourceType::CrvsSrs, 0.05);
        let ld = obs_log_density(&y, 1.05, &ErrorModel::default()).unwrap();
        assert!((ld - (-(0.05 * (2.0 * PI).sqrt()).ln())).abs() < 1e-12);
    }

    #[test]
    fn doubling_variance_at_mode_costs_half_log_two() {
        let y1 = obs(1.05, SourceType::Dhs, 0.03);
        let y2 = obs(1.05, SourceType::Dhs, 0.03 * 2f64.sqrt());
        let em = ErrorModel::default();
        let d = obs_log_density(&y1, 1.05, &em).unwrap() - obs_log_density(&y2, 1.05, &em).unwrap();
        assert!((d - 0.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_reference_normal_pdf() {
        use statrs::distribution::{Continuous, Normal};
        let y = obs(1.10, SourceType::Census, 0.02);
        let em = em_with(SourceType::Census, 0.0);
        let reference = Normal::new(1.05f64.ln(), 0.02)
            .unwrap()
            .ln_pdf(1.10f64.ln());
        assert!((obs_log_density(&y, 1.05, &em).unwrap() - reference).abs() < 1e-12);
        // Frozen value: log N(ln 1.10 | ln 1.05, 0.02²).
        assert!(
            (reference - 0.287_944_653_885_125).abs() < 1e-12,
            "{reference}"
        );
    }

    #[test]
    fn zero_variance_needs_floor() {
        let y = obs(1.05, SourceType::CrvsSrs, 0.0);
        let em = ErrorModel::default().with_floor(0.0);
        assert_eq!(
            obs_log_density(&y, 1.05, &em),
            Err(LikelihoodError::ZeroTotalVariance(SourceType::CrvsSrs))
        );
        assert!(obs_log_density(&y, 1.05, &ErrorModel::default())
            .unwrap()
            .is_finite());
    }

    #[test]
    fn omega_support_is_enforced() {
        assert!(ErrorModel::new([0.1, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(ErrorModel::new([0.0, 0.6, 0.0, 0.0, 0.0]).is_err());
        assert!(ErrorModel::new([0.0, 0.5, 0.2, 0.0, 0.1]).is_ok());
    }

    #[test]
    fn larger_omega_lowers_mode_and_raises_tails() {
        let y = obs(1.05, SourceType::Dhs, 0.02);
        let small = em_with(SourceType::Dhs, 0.01);
        let large = em_with(SourceType::Dhs, 0.03);
        let at_mode = |em: &ErrorModel| obs_log_density(&y, 1.05, em).unwrap();
        assert!(at_mode(&large) < at_mode(&small));
        // Four small-model sds away on the log scale, in both directions.
        let sd = (0.01f64.powi(2) + 0.02f64.powi(2)).sqrt();
        for sign in [-1.0, 1.0] {
            let theta = 1.05 * (sign * 4.0 * sd).exp();
            let far = |em: &ErrorModel| obs_log_density(&y, theta, em).unwrap();
            assert!(far(&large) > far(&small));
        }
    }

    #[test]
    fn total_is_additive() {
        let em = em_with(SourceType::Dhs, 0.01);
        let mut field = ThetaField::default();
        field.insert("X", 2000, 1.06);
        assert_eq!(
            total_log_likelihood(&ObservationSet::default(), &field, &em).unwrap(),
            0.0
        );
        let one = ObservationSet::new(vec![obs(1.07, SourceType::Dhs, 0.02)]);
        let two = ObservationSet::new(vec![obs(1.07, SourceType::Dhs, 0.02); 2]);
        let l1 = total_log_likelihood(&one, &field, &em).unwrap();
        assert_eq!(total_log_likelihood(&two, &field, &em).unwrap(), 2.0 * l1);
    }

    #[test]
    fn total_matches_brute_force_sum() {
        let rows: Vec<Observation> = (0..5)
            .map(|i| Observation {
                country_code: if i < 3 { "A".into() } else { "B".into() },
                year: 1990.0 + i as f64,
                value: 1.03 + 0.01 * i as f64,
                source_type: SourceType::ALL[i % 5],
                sampling_sd: 0.01 + 0.002 * i as f64,
            })
            .collect();
        let em = ErrorModel::new([0.0, 0.01, 0.02, 0.03, 0.04]).unwrap();
        let mut field = ThetaField::default();
        for (i, r) in rows.iter().enumerate() {
            field.insert(&r.country_code, r.grid_year(), 1.05 + 0.003 * i as f64);
        }
        // Independent oracle written out from the normal density formula.
        let oracle: f64 = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let w = [0.0, 0.01, 0.02, 0.03, 0.04][i % 5];
                let var: f64 = w * w + r.sampling_sd * r.sampling_sd;
                let z = r.value.ln() - (1.05 + 0.003 * i as f64).ln();
                -0.5 * (2.0 * PI * var).ln() - z * z / (2.0 * var)
            })
            .sum();
        let set = ObservationSet::new(rows);
        assert!((total_log_likelihood(&set, &field, &em).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn missing_theta_is_an_error() {
        let set = ObservationSet::new(vec![obs(1.05, SourceType::Dhs, 0.02)]);
        assert!(matches!(
            total_log_likelihood(&set, &ThetaField::default(), &ErrorModel::default()),
            Err(LikelihoodError::MissingTheta { .. })
        ));
    }
}
