use serde::{Deserialize, Serialize};

use super::McmcError;

/// Run lengths and tuning of the sampler.
///
/// Each chain runs `n_burnin` adaptation iterations, then keeps every
/// `thinning`-th of the next `thinning * n_posterior / n_chains` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_burnin: usize,
    pub thinning: usize,
    /// Kept draws per parameter, pooled over chains.
    pub n_posterior: usize,
    pub seed: u64,
    pub adapt_window: usize,
    pub target_accept: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_chains: 4,
            n_burnin: 1000,
            thinning: 2,
            n_posterior: 4000,
            seed: 1,
            adapt_window: 50,
            target_accept: 0.44,
        }
    }
}

impl McmcConfig {
    /// Settings of the full-data baseline fit.
    pub fn full_baseline() -> Self {
        McmcConfig {
            n_chains: 8,
            n_burnin: 8000,
            thinning: 20,
            n_posterior: 4000,
            ..Default::default()
        }
    }

    /// Settings of the full-data inflation fit.
    pub fn full_inflation() -> Self {
        McmcConfig {
            n_chains: 14,
            n_burnin: 7600,
            thinning: 10,
            n_posterior: 28_000,
            ..Default::default()
        }
    }

    pub fn kept_per_chain(&self) -> usize {
        self.n_posterior / self.n_chains.max(1)
    }

    pub fn total_iterations(&self) -> usize {
        self.n_burnin + self.kept_per_chain() * self.thinning
    }

    pub fn validate(&self) -> Result<(), McmcError> {
        let bad = |m: &str| Err(McmcError::InvalidConfig(m.to_string()));
        if self.n_chains == 0
            || self.thinning == 0
            || self.n_posterior == 0
            || self.adapt_window == 0
        {
            return bad("chains, thinning, posterior size and adaptation window must be positive");
        }
        if !self.n_posterior.is_multiple_of(self.n_chains) {
            return bad("posterior size must be a multiple of the number of chains");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target acceptance must lie in (0, 1)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_settings_are_consistent() {
        let c = McmcConfig::full_inflation();
        c.validate().unwrap();
        assert_eq!(c.kept_per_chain(), 2000);
        assert_eq!(c.total_iterations(), 7600 + 20_000);
        let b = McmcConfig::full_baseline();
        b.validate().unwrap();
        assert_eq!(b.kept_per_chain(), 500);
    }

    #[test]
    fn rejects_inconsistent_sizes() {
        let c = McmcConfig {
            n_chains: 3,
            n_posterior: 100,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = McmcConfig {
            target_accept: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let c: McmcConfig =
            serde_json::from_str(r#"{"n_chains": 14, "n_burnin": 7600, "thinning": 10}"#).unwrap();
        assert_eq!(c.n_chains, 14);
        assert_eq!(c.target_accept, 0.44);
        let back: McmcConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
