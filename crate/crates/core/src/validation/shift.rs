use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ValidationError;
use crate::projection::{fit_paths, FitDraws, SrbPaths};
use crate::quantile::{median, Summary};

pub const REFERENCE_YEARS: [i32; 3] = [1995, 2005, 2015];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Theta,
    Inflation,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Theta => "theta",
            Outcome::Inflation => "inflation",
        }
    }
}

/// How far full-data medians move away from training-data estimates in one
/// reference year. Counts are numbers of countries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateShift {
    pub outcome: Outcome,
    pub year: i32,
    pub n_countries: usize,
    pub median_error: f64,
    pub median_abs_error: f64,
    pub below95: usize,
    pub above95: usize,
    pub below80: usize,
    pub above80: usize,
}

impl EstimateShift {
    pub fn pct(&self, count: usize) -> f64 {
        100.0 * count as f64 / self.n_countries as f64
    }
}

struct Point {
    error: f64,
    below95: bool,
    above95: bool,
    below80: bool,
    above80: bool,
}

fn compare(full: &[f64], train: &[f64]) -> Point {
    let m = median(full);
    let t = Summary::from_draws(train);
    Point {
        error: m - t.median,
        below95: m < t.q025,
        above95: m > t.q975,
        below80: m < t.q10,
        above80: m > t.q90,
    }
}

/// Compares posterior medians under `full` with the training fit's median
/// and credible intervals for every country present in both fits. The
/// inflation outcome is reported only when both fits carry transitions.
pub fn estimate_shift_metrics(
    full: &FitDraws,
    train: &FitDraws,
    years: &[i32],
    seed: u64,
) -> Result<Vec<EstimateShift>, ValidationError> {
    if let Some(&y) = years.iter().find(|y| !SrbPaths::years().contains(y)) {
        return Err(ValidationError::MissingYear(y));
    }
    let codes: Vec<&str> = full
        .layout
        .slots
        .iter()
        .map(|s| s.code.as_str())
        .filter(|c| train.layout.slot_index(c).is_some())
        .collect();
    let mut outcomes = vec![Outcome::Theta];
    if full.spec.kind.has_transition() && train.spec.kind.has_transition() {
        outcomes.push(Outcome::Inflation);
    }
    // points[country][outcome][year]
    let points = codes
        .par_iter()
        .enumerate()
        .map(|(i, code)| {
            let pf = fit_paths(full, code, seed, i as u64)?;
            let pt = fit_paths(train, code, seed, i as u64)?;
            Ok(outcomes
                .iter()
                .map(|o| {
                    years
                        .iter()
                        .map(|&y| match o {
                            Outcome::Theta => compare(&pf.theta_draws(y), &pt.theta_draws(y)),
                            Outcome::Inflation => {
                                compare(pf.inflation_draws(y), pt.inflation_draws(y))
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ValidationError>>()?;

    let mut out = Vec::new();
    for (k, &outcome) in outcomes.iter().enumerate() {
        for (j, &year) in years.iter().enumerate() {
            let pts: Vec<&Point> = points.iter().map(|c| &c[k][j]).collect();
            let errors: Vec<f64> = pts.iter().map(|p| p.error).collect();
            let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
            let count = |f: fn(&Point) -> bool| pts.iter().filter(|p| f(p)).count();
            out.push(EstimateShift {
                outcome,
                year,
                n_countries: pts.len(),
                median_error: median(&errors),
                median_abs_error: median(&abs),
                below95: count(|p| p.below95),
                above95: count(|p| p.above95),
                below80: count(|p| p.below80),
                above80: count(|p| p.above80),
            });
        }
    }
    Ok(out)
}
