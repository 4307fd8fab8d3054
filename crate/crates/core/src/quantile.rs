//! The quantile convention shared by every summary in the crate: linear
//! interpolation between order statistics (position `(n - 1) p`).

use serde::{Deserialize, Serialize};

/// Quantile of already sorted values. Returns NaN on empty input.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = h - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    quantile_sorted(&sorted_copy(values), p)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Median with equal-tail 95% and 80% bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub q10: f64,
    pub q90: f64,
}

impl Summary {
    pub fn from_draws(values: &[f64]) -> Self {
        let s = sorted_copy(values);
        Summary {
            median: quantile_sorted(&s, 0.5),
            q025: quantile_sorted(&s, 0.025),
            q975: quantile_sorted(&s, 0.975),
            q10: quantile_sorted(&s, 0.10),
            q90: quantile_sorted(&s, 0.90),
        }
    }
}
