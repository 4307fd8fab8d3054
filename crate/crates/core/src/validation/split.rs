use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ValidationError;
use crate::data::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Leave out every observation from `cutoff` onward.
    RecentAfterYear { cutoff: i32 },
    /// Leave out a uniformly chosen fraction of rows.
    RandomFraction { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub repetition: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: ObservationSet,
    pub test: ObservationSet,
}

pub fn split(obs: &ObservationSet, spec: &SplitSpec) -> Result<Split, ValidationError> {
    let rows = obs.rows();
    let in_test: Vec<bool> = match spec.mode {
        SplitMode::RecentAfterYear { cutoff } => {
            rows.iter().map(|o| o.year >= cutoff as f64).collect()
        }
        SplitMode::RandomFraction { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(ValidationError::InvalidSplit(format!(
                    "fraction {fraction} must lie strictly between 0 and 1"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(spec.repetition);
            let k = (fraction * rows.len() as f64).round() as usize;
            let mut mask = vec![false; rows.len()];
            for i in sample(&mut rng, rows.len(), k) {
                mask[i] = true;
            }
            mask
        }
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (o, t) in rows.iter().zip(in_test) {
        if t { &mut test } else { &mut train }.push(o.clone());
    }
    if test.is_empty() {
        return Err(ValidationError::EmptyTest);
    }
    Ok(Split {
        train: ObservationSet::new(train),
        test: ObservationSet::new(test),
    })
}

/// The year whose "from this year onward" share of observations is closest
/// to `target` (earliest year on ties).
pub fn choose_cutoff(obs: &ObservationSet, target: f64) -> Option<i32> {
    let n = obs.len() as f64;
    let mut years: Vec<i32> = obs.iter().map(|o| o.year.ceil() as i32).collect();
    years.sort_unstable();
    years.dedup();
    years
        .into_iter()
        .map(|y| {
            let share = obs.iter().filter(|o| o.year >= y as f64).count() as f64 / n;
            (y, (share - target).abs())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(y, _)| y)
}
