use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ValidationError;
use crate::data::{Observation, ObservationSet};
use crate::likelihood::DEFAULT_VARIANCE_FLOOR;
use crate::mcmc::{names, McmcError};
use crate::model::dist::std_normal;
use crate::projection::{fit_paths, FitDraws, SrbPaths};
use crate::quantile::{median, Summary};

pub const DEFAULT_PERMUTATIONS: usize = 1000;
const NOISE_STREAM: u64 = 1 << 33;

/// A left-out observation and the summary of its posterior predictive
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveRow {
    pub country_code: String,
    pub year: f64,
    pub y: f64,
    pub ppd: Summary,
}

/// Posterior predictive draws of each test observation: the SRB of its
/// country-year under `fit` times log-normal noise with the fitted
/// non-sampling sd of its source type and its own sampling sd.
pub fn posterior_predictive(
    fit: &FitDraws,
    test: &ObservationSet,
    seed: u64,
) -> Result<Vec<PredictiveRow>, ValidationError> {
    let countries = test.countries();
    let per_country = countries
        .par_iter()
        .enumerate()
        .map(|(i, code)| {
            let paths = fit_paths(fit, code, seed, i as u64)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(NOISE_STREAM + i as u64);
            test.for_country(code)
                .map(|o| predictive_row(fit, &paths, o, &mut rng))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, ValidationError>>()?;
    Ok(per_country.into_iter().flatten().collect())
}

pub(super) fn predictive_row<R: Rng + ?Sized>(
    fit: &FitDraws,
    paths: &SrbPaths,
    o: &Observation,
    rng: &mut R,
) -> Result<PredictiveRow, ValidationError> {
    let year = o.grid_year();
    if !SrbPaths::years().contains(&year) {
        return Err(ValidationError::MissingYear(year));
    }
    let omega = if o.source_type.has_nonsampling_error() {
        let name = names::omega(o.source_type);
        Some(
            fit.draws
                .get(&name)
                .ok_or(McmcError::UnknownParameter(name))?,
        )
    } else {
        None
    };
    let v2 = o.sampling_sd * o.sampling_sd;
    let draws: Vec<f64> = paths
        .theta_draws(year)
        .iter()
        .enumerate()
        .map(|(g, theta)| {
            let w = omega.map_or(0.0, |col| col[g]);
            let sd = (w * w + v2).max(DEFAULT_VARIANCE_FLOOR).sqrt();
            (theta.ln() + sd * std_normal(rng)).exp()
        })
        .collect();
    Ok(PredictiveRow {
        country_code: o.country_code.clone(),
        year: o.year,
        y: o.value,
        ppd: Summary::from_draws(&draws),
    })
}

/// Scores of one permutation set, holding one left-out observation per
/// country. Counts are exclusive, so the three counts of each interval sum
/// to `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub n: usize,
    pub median_error: f64,
    pub median_abs_error: f64,
    pub below95: usize,
    pub above95: usize,
    pub inside95: usize,
    pub below80: usize,
    pub above80: usize,
    pub inside80: usize,
}

impl PermutationOutcome {
    pub fn pct(&self, count: usize) -> f64 {
        100.0 * count as f64 / self.n as f64
    }
}

/// Position of `y` relative to `(l, u)`: inside only when `l < y < u`.
fn locate(y: f64, l: f64, u: f64) -> (usize, usize, usize) {
    if !(y > l) {
        (1, 0, 0)
    } else if !(y < u) {
        (0, 1, 0)
    } else {
        (0, 0, 1)
    }
}

fn score(rows: &[&PredictiveRow]) -> PermutationOutcome {
    let errors: Vec<f64> = rows.iter().map(|r| r.y - r.ppd.median).collect();
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let mut out = PermutationOutcome {
        n: rows.len(),
        median_error: median(&errors),
        median_abs_error: median(&abs),
        below95: 0,
        above95: 0,
        inside95: 0,
        below80: 0,
        above80: 0,
        inside80: 0,
    };
    for r in rows {
        let (b, a, i) = locate(r.y, r.ppd.q025, r.ppd.q975);
        out.below95 += b;
        out.above95 += a;
        out.inside95 += i;
        let (b, a, i) = locate(r.y, r.ppd.q10, r.ppd.q90);
        out.below80 += b;
        out.above80 += a;
        out.inside80 += i;
    }
    out
}

/// Rows grouped by country, each group in a canonical order so that the
/// outcome does not depend on the input order.
fn groups(rows: &[PredictiveRow]) -> Vec<Vec<&PredictiveRow>> {
    let mut by_country: BTreeMap<&str, Vec<&PredictiveRow>> = BTreeMap::new();
    for r in rows {
        by_country.entry(&r.country_code).or_default().push(r);
    }
    by_country
        .into_values()
        .map(|mut g| {
            g.sort_by(|a, b| {
                a.year
                    .total_cmp(&b.year)
                    .then(a.y.total_cmp(&b.y))
                    .then(a.ppd.median.total_cmp(&b.ppd.median))
            });
            g
        })
        .collect()
}

/// Scores `n_sets` permutation sets, each drawing one left-out observation
/// per country uniformly at random.
pub fn permutation_outcomes(
    rows: &[PredictiveRow],
    n_sets: usize,
    seed: u64,
) -> Result<Vec<PermutationOutcome>, ValidationError> {
    if rows.is_empty() {
        return Err(ValidationError::NoTestRows);
    }
    let groups = groups(rows);
    Ok((0..n_sets)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let pick: Vec<&PredictiveRow> = groups
                .iter()
                .map(|g| g[rng.random_range(0..g.len())])
                .collect();
            score(&pick)
        })
        .collect())
}

/// Table-4 style metrics: means over permutation sets of the median error,
/// median absolute error and the percentages outside each interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeftoutMetrics {
    pub n_test_countries: usize,
    pub n_test_rows: usize,
    pub n_permutations: usize,
    pub median_error: f64,
    pub median_abs_error: f64,
    pub below95: f64,
    pub above95: f64,
    pub below80: f64,
    pub above80: f64,
}

pub fn leftout_metrics(
    rows: &[PredictiveRow],
    n_sets: usize,
    seed: u64,
) -> Result<LeftoutMetrics, ValidationError> {
    let sets = permutation_outcomes(rows, n_sets.max(1), seed)?;
    let mean = |f: &dyn Fn(&PermutationOutcome) -> f64| {
        sets.iter().map(f).sum::<f64>() / sets.len() as f64
    };
    Ok(LeftoutMetrics {
        n_test_countries: sets[0].n,
        n_test_rows: rows.len(),
        n_permutations: sets.len(),
        median_error: mean(&|s| s.median_error),
        median_abs_error: mean(&|s| s.median_abs_error),
        below95: mean(&|s| s.pct(s.below95)),
        above95: mean(&|s| s.pct(s.above95)),
        below80: mean(&|s| s.pct(s.below80)),
        above80: mean(&|s| s.pct(s.above80)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(c: &str, year: f64, y: f64, ppd: [f64; 5]) -> PredictiveRow {
        PredictiveRow {
            country_code: c.into(),
            year,
            y,
            ppd: Summary {
                median: ppd[0],
                q025: ppd[1],
                q975: ppd[2],
                q10: ppd[3],
                q90: ppd[4],
            },
        }
    }

    #[test]
    fn centered_predictions_have_no_error() {
        let rows: Vec<_> = (0..10)
            .map(|i| row(&format!("C{i}"), 2000.0, 1.05, [1.05, 1.0, 1.1, 1.02, 1.08]))
            .collect();
        let m = leftout_metrics(&rows, 50, 1).unwrap();
        assert_eq!(m.median_error, 0.0);
        assert_eq!(m.median_abs_error, 0.0);
        assert_eq!(
            (m.below95, m.above95, m.below80, m.above80),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(m.n_test_countries, 10);
    }

    #[test]
    fn interval_edges_count_as_outside() {
        let rows = vec![
            row("A", 2000.0, 1.0, [1.05, 1.0, 1.1, 1.02, 1.08]),
            row("B", 2000.0, 1.1, [1.05, 1.0, 1.1, 1.02, 1.08]),
        ];
        let s = permutation_outcomes(&rows, 1, 0).unwrap()[0];
        assert_eq!((s.below95, s.above95, s.inside95), (1, 1, 0));
        assert_eq!((s.below80, s.above80, s.inside80), (1, 1, 0));
    }

    #[test]
    fn one_row_per_country_per_set() {
        let mut rows = Vec::new();
        for i in 0..5 {
            rows.push(row(
                "A",
                2000.0 + i as f64,
                1.0 + i as f64,
                [0.0, -1.0, 1.0, -0.5, 0.5],
            ));
        }
        rows.push(row("B", 2000.0, 0.0, [0.0, -1.0, 1.0, -0.5, 0.5]));
        for s in permutation_outcomes(&rows, 200, 3).unwrap() {
            assert_eq!(s.n, 2);
            assert_eq!(s.below95 + s.above95 + s.inside95, 2);
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let rows: Vec<_> = (0..30)
            .map(|i| {
                row(
                    &format!("C{}", i % 4),
                    i as f64,
                    i as f64 * 0.1,
                    [1.0, 0.5, 2.0, 0.8, 1.5],
                )
            })
            .collect();
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(
            leftout_metrics(&rows, 100, 9).unwrap(),
            leftout_metrics(&rev, 100, 9).unwrap()
        );
    }

    #[test]
    fn no_rows() {
        assert!(matches!(
            leftout_metrics(&[], 10, 0),
            Err(ValidationError::NoTestRows)
        ));
    }
}
