//! Prior densities. Each term is exposed on its own so the sampler can
//! evaluate local conditionals with exactly the densities summed by
//! [`log_prior`].

use super::dist::{
    bernoulli_logit_ln_pmf, logistic_ln_pdf, logit, normal_ln_pdf, trunc_t3_ln_pdf,
    truncnorm_lower_ln_pdf, uniform_ln_pdf,
};
use super::{
    ar1::stationary_log_sd, ModelKind, ModelLayout, ModelParams, ModelSpec, TransitionParams,
};
use crate::data::SourceType;

/// Supports of the uniform priors.
pub mod bounds {
    pub const BETA_REGION: (f64, f64) = (1.0, 1.1);
    pub const SIGMA_BETA: (f64, f64) = (0.0, 0.05);
    pub const RHO: (f64, f64) = (0.0, 1.0);
    pub const SIGMA_EPS: (f64, f64) = (0.0, 0.05);
    pub const OMEGA: (f64, f64) = (0.0, 0.5);
    pub const MU_XI: (f64, f64) = (0.0, 2.0);
    pub const SIGMA_XI: (f64, f64) = (0.0, 2.0);
    pub const MU_LAMBDA: (f64, f64) = (0.0, 40.0);
    pub const SIGMA_LAMBDA: (f64, f64) = (1.0, 10.0);
    pub const SIGMA_GAMMA: (f64, f64) = (0.0, 10.0);
    pub const SIGMA_PI: (f64, f64) = (0.0, 2.0);
}

#[inline]
pub(crate) fn uniform(x: f64, b: (f64, f64)) -> f64 {
    uniform_ln_pdf(x, b.0, b.1)
}

/// Positive scale parameters: the open lower end excludes zero.
#[inline]
pub(crate) fn uniform_scale(x: f64, b: (f64, f64)) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        uniform(x, b)
    }
}

/// Stationary AR(1) density of a log-fluctuation path.
pub fn eta_path_term(log_eta: &[f64], rho: f64, sigma_eps: f64) -> f64 {
    let Some((&first, rest)) = log_eta.split_first() else {
        return 0.0;
    };
    let mut lp = normal_ln_pdf(first, 0.0, stationary_log_sd(rho, sigma_eps));
    let mut prev = first;
    for &h in rest {
        lp += normal_ln_pdf(h, rho * prev, sigma_eps);
        prev = h;
    }
    lp
}

/// Truncated-normal hierarchy for `ξ` and the phase lengths.
#[inline]
pub fn positive_term(value: f64, mu: f64, sigma: f64) -> f64 {
    truncnorm_lower_ln_pdf(value, mu, sigma, 0.0)
}

#[inline]
pub fn gamma0_term(gamma0: f64, anchors: (f64, f64), sigma_gamma: f64) -> f64 {
    let (z, x) = anchors;
    trunc_t3_ln_pdf(gamma0, x, sigma_gamma, z)
}

/// The four transition shape terms of one country plus its start year.
pub fn transition_term(
    tp: &TransitionParams,
    anchors: (f64, f64),
    h: &super::TransitionHyper,
) -> f64 {
    positive_term(tp.xi, h.mu_xi, h.sigma_xi)
        + positive_term(tp.lambda1, h.mu_lambda[0], h.sigma_lambda[0])
        + positive_term(tp.lambda2, h.mu_lambda[1], h.sigma_lambda[1])
        + positive_term(tp.lambda3, h.mu_lambda[2], h.sigma_lambda[2])
        + gamma0_term(tp.gamma0, anchors, h.sigma_gamma)
}

/// Priors of the ζ hyperparameters (without `μ_π`, `σ_π`).
pub fn zeta_hyper_term(h: &super::TransitionHyper) -> f64 {
    let mut lp = uniform(h.mu_xi, bounds::MU_XI) + uniform_scale(h.sigma_xi, bounds::SIGMA_XI);
    for k in 0..3 {
        lp += uniform(h.mu_lambda[k], bounds::MU_LAMBDA)
            + uniform(h.sigma_lambda[k], bounds::SIGMA_LAMBDA);
    }
    lp + uniform_scale(h.sigma_gamma, bounds::SIGMA_GAMMA)
}

pub fn omega_term(omega: &[f64; 5]) -> f64 {
    let mut lp = 0.0;
    for s in SourceType::ALL {
        let w = omega[s.index()];
        lp += if s.has_nonsampling_error() {
            uniform(w, bounds::OMEGA)
        } else if w == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
    }
    lp
}

/// Individual prior terms, for inspection and testing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorTerms {
    pub terms: Vec<(String, f64)>,
}

impl PriorTerms {
    fn push(&mut self, name: impl Into<String>, v: f64) {
        self.terms.push((name.into(), v));
    }

    pub fn total(&self) -> f64 {
        self.terms.iter().map(|(_, v)| v).sum()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Every prior term active for `spec.kind`, in a fixed order.
pub fn prior_terms(spec: &ModelSpec, layout: &ModelLayout, p: &ModelParams) -> PriorTerms {
    let mut t = PriorTerms::default();
    let kind = spec.kind;
    let f = &p.fluctuation;
    if kind == ModelKind::M1 {
        for (r, &b) in layout.regions.iter().zip(&p.baseline.beta_region) {
            t.push(format!("beta_region[{r}]"), uniform(b, bounds::BETA_REGION));
        }
        t.push(
            "sigma_beta",
            uniform_scale(p.baseline.sigma_beta, bounds::SIGMA_BETA),
        );
        t.push(
            "rho",
            if f.rho < 1.0 {
                uniform(f.rho, bounds::RHO)
            } else {
                f64::NEG_INFINITY
            },
        );
        t.push("sigma_eps", uniform_scale(f.sigma_eps, bounds::SIGMA_EPS));
    }
    for (i, slot) in layout.slots.iter().enumerate() {
        let c = &slot.code;
        match kind {
            ModelKind::M1 => {
                let b = p.baseline.beta[i];
                let br = p.baseline.beta_region[slot.region];
                t.push(
                    format!("beta[{c}]"),
                    normal_ln_pdf(b.ln(), br.ln(), p.baseline.sigma_beta),
                );
            }
            ModelKind::M2Joint => {
                let b = p.baseline.beta[i];
                let mean = spec.beta_region_hat(c).unwrap_or(f64::NAN);
                let sd = spec.fixed.sigma_beta_hat.unwrap_or(f64::NAN);
                let lp = if b > 0.0 {
                    normal_ln_pdf(b, mean, sd)
                } else {
                    f64::NEG_INFINITY
                };
                t.push(format!("beta[{c}]"), lp);
            }
            _ => {}
        }
        let log_eta: Vec<f64> = f.eta[i].values.iter().map(|e| e.ln()).collect();
        t.push(
            format!("eta[{c}]"),
            eta_path_term(&log_eta, f.rho, f.sigma_eps),
        );
        if let (Some(tp), Some(h)) = (p.transitions.get(i).copied().flatten(), p.hyper.as_ref()) {
            let anchors = slot.anchors.unwrap_or((f64::NAN, f64::NAN));
            t.push(
                format!("xi[{c}]"),
                positive_term(tp.xi, h.mu_xi, h.sigma_xi),
            );
            for (k, l) in [tp.lambda1, tp.lambda2, tp.lambda3].into_iter().enumerate() {
                t.push(
                    format!("lambda{}[{c}]", k + 1),
                    positive_term(l, h.mu_lambda[k], h.sigma_lambda[k]),
                );
            }
            t.push(
                format!("gamma0[{c}]"),
                gamma0_term(tp.gamma0, anchors, h.sigma_gamma),
            );
            if kind.has_indicator() {
                let pi = h.pi[i];
                let lp = if pi > 0.0 && pi < 1.0 {
                    logit(pi)
                } else {
                    f64::NAN
                };
                t.push(format!("delta[{c}]"), bernoulli_logit_ln_pmf(tp.delta, lp));
                t.push(format!("pi[{c}]"), normal_ln_pdf(lp, h.mu_pi, h.sigma_pi));
            } else if !tp.delta {
                // M4 forces the transition on.
                t.push(format!("delta[{c}]"), f64::NEG_INFINITY);
            }
        }
    }
    if let (true, Some(h)) = (kind.samples_hyper(), p.hyper.as_ref()) {
        t.push("zeta", zeta_hyper_term(h));
        t.push("mu_pi", logistic_ln_pdf(h.mu_pi));
        t.push("sigma_pi", uniform_scale(h.sigma_pi, bounds::SIGMA_PI));
    }
    t.push("omega", omega_term(&p.omega));
    t
}

/// Sum of all prior log densities active for `spec.kind`; `-∞` outside the
/// support. Baselines enter through `log β`, fluctuations through `log η`.
pub fn log_prior(spec: &ModelSpec, layout: &ModelLayout, p: &ModelParams) -> f64 {
    let total = prior_terms(spec, layout, p).total();
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}
