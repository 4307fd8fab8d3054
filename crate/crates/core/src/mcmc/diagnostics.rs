use std::collections::BTreeMap;

use super::chains::PosteriorChains;
use super::McmcError;

const MIN_DRAWS: usize = 10;

/// Potential scale reduction factor of one parameter.
pub fn gelman_rubin(chains: &PosteriorChains, param: &str) -> Result<f64, McmcError> {
    let values = chains
        .chain_values(param)
        .ok_or_else(|| McmcError::UnknownParameter(param.to_string()))?;
    gelman_rubin_values(&values, param)
}

/// PSRF from raw chains of equal length: `sqrt(V/W)` with
/// `V = (n-1)/n W + B/n`, `W` the mean within-chain variance and `B/n` the
/// variance of the chain means.
pub fn gelman_rubin_values(chains: &[&[f64]], param: &str) -> Result<f64, McmcError> {
    let m = chains.len();
    if m < 2 {
        return Err(McmcError::TooFewChains(m));
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < MIN_DRAWS {
        return Err(McmcError::TooFewDraws(n));
    }
    let nf = n as f64;
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c[..n].iter().sum::<f64>() / nf)
        .collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c[..n].iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if w <= 0.0 {
        return Err(McmcError::ZeroVariance(param.to_string()));
    }
    let v = (nf - 1.0) / nf * w + b_over_n;
    Ok((v / w).sqrt())
}

/// PSRF of every parameter accepted by `keep`; `None` where it is undefined
/// (constant draws, or too few chains).
pub fn psrf_table(
    chains: &PosteriorChains,
    keep: impl Fn(&str) -> bool,
) -> BTreeMap<String, Option<f64>> {
    chains
        .names()
        .iter()
        .filter(|n| keep(n))
        .map(|n| (n.clone(), gelman_rubin(chains, n).ok()))
        .collect()
}
