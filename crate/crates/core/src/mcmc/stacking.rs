//! Chain stacking: weight parallel chains by their leave-one-out predictive
//! performance and resample draws accordingly.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::chains::{names, DrawSet, PosteriorChains};
use super::loo::loo_pointwise;
use super::McmcError;
use crate::data::ObservationSet;
use crate::quantile::median;

/// Chains whose start-year medians differ by more than this many years
/// trigger stacking.
pub const STACKING_TRIGGER_YEARS: f64 = 5.0;

const STEP: f64 = 0.1;
const MAX_ITER: usize = 5000;
const TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone)]
pub struct StackedPosterior {
    pub weights: Vec<f64>,
    pub draws: DrawSet,
    pub unstable_loo_points: usize,
}

/// Weights and the objective after every accepted ascent step.
#[derive(Debug, Clone, PartialEq)]
pub struct StackingTrace {
    pub weights: Vec<f64>,
    pub objective: Vec<f64>,
}

/// Mean over observations of `log sum_k w_k f_k(y_i)`, from `log_f[k][i]`.
fn objective(log_f: &[Vec<f64>], shift: &[f64], w: &[f64]) -> f64 {
    let n = shift.len();
    (0..n)
        .map(|i| {
            let s: f64 = log_f
                .iter()
                .zip(w)
                .map(|(lf, wk)| wk * (lf[i] - shift[i]).exp())
                .sum();
            s.ln() + shift[i]
        })
        .sum::<f64>()
        / n as f64
}

/// Maximizes the stacking objective over the simplex by exponentiated
/// gradient ascent. A step that would lower the objective is halved until
/// it does not, so the recorded objective never decreases.
pub fn maximize_stacking_weights(log_f: &[Vec<f64>]) -> Result<StackingTrace, McmcError> {
    let k = log_f.len();
    if k == 0 {
        return Err(McmcError::TooFewChains(0));
    }
    let n = log_f[0].len();
    let shift: Vec<f64> = (0..n)
        .map(|i| {
            log_f
                .iter()
                .map(|lf| lf[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    if let Some(i) = shift.iter().position(|m| !m.is_finite()) {
        return Err(McmcError::DegenerateObjective { observation: i });
    }
    let mut w = vec![1.0 / k as f64; k];
    let mut obj = objective(log_f, &shift, &w);
    let mut trace = vec![obj];
    if k == 1 || n == 0 {
        return Ok(StackingTrace {
            weights: w,
            objective: trace,
        });
    }
    let f: Vec<Vec<f64>> = log_f
        .iter()
        .map(|lf| lf.iter().zip(&shift).map(|(l, m)| (l - m).exp()).collect())
        .collect();
    let mut grad = vec![0.0; k];
    let mut trial = vec![0.0; k];
    for _ in 0..MAX_ITER {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let denom: f64 = (0..k).map(|j| w[j] * f[j][i]).sum();
            for j in 0..k {
                grad[j] += f[j][i] / denom / n as f64;
            }
        }
        let mut eta = STEP;
        let mut improved = None;
        for _ in 0..MAX_HALVINGS {
            let gmax = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for j in 0..k {
                trial[j] = w[j] * (eta * (grad[j] - gmax)).exp();
            }
            let total: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|t| *t /= total);
            let o = objective(log_f, &shift, &trial);
            if o >= obj {
                improved = Some(o);
                break;
            }
            eta *= 0.5;
        }
        let Some(o) = improved else { break };
        let gain = o - obj;
        w.copy_from_slice(&trial);
        obj = o;
        trace.push(obj);
        if gain < TOL {
            break;
        }
    }
    Ok(StackingTrace {
        weights: w,
        objective: trace,
    })
}

/// Largest difference, over countries, between the start-year medians of
/// any two chains. Zero for fits without a transition.
pub fn gamma0_spread(chains: &PosteriorChains) -> f64 {
    let mut spread: f64 = 0.0;
    for s in &chains.layout.slots {
        let Some(per_chain) = chains.chain_values(&names::gamma0(&s.code)) else {
            continue;
        };
        let meds: Vec<f64> = per_chain.iter().map(|c| median(c)).collect();
        let lo = meds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = meds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi.is_finite() && lo.is_finite() {
            spread = spread.max(hi - lo);
        }
    }
    spread
}

pub fn stacking_triggered(chains: &PosteriorChains) -> bool {
    gamma0_spread(chains) > STACKING_TRIGGER_YEARS
}

/// Stacks the chains of a fit and resamples `n_draws` draws: a chain is
/// picked by its weight, then a draw uniformly within it.
pub fn stack_chains<R: Rng + ?Sized>(
    chains: &PosteriorChains,
    data: &ObservationSet,
    n_draws: usize,
    rng: &mut R,
) -> Result<StackedPosterior, McmcError> {
    let mut log_f = Vec::with_capacity(chains.n_chains());
    let mut unstable = 0;
    for k in 0..chains.n_chains() {
        let r = loo_pointwise(chains, k, data)?;
        unstable += r.unstable.len();
        log_f.push(r.log_density);
    }
    let trace = maximize_stacking_weights(&log_f)?;
    let per_chain = chains.draws_per_chain();
    let pick =
        WeightedIndex::new(&trace.weights).map_err(|e| McmcError::InvalidConfig(e.to_string()))?;
    let idx: Vec<usize> = (0..n_draws)
        .map(|_| pick.sample(rng) * per_chain + rng.random_range(0..per_chain))
        .collect();
    let draws = DrawSet::concat(&chains.chains).select(&idx);
    Ok(StackedPosterior {
        weights: trace.weights,
        draws,
        unstable_loo_points: unstable,
    })
}
