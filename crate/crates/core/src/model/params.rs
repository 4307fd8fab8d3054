use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// The five model fits of the staged pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    M1,
    M2,
    M3,
    M4,
    M2Joint,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::M1,
        ModelKind::M2,
        ModelKind::M3,
        ModelKind::M4,
        ModelKind::M2Joint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::M1 => "M1",
            ModelKind::M2 => "M2",
            ModelKind::M3 => "M3",
            ModelKind::M4 => "M4",
            ModelKind::M2Joint => "M2Joint",
        }
    }

    /// Whether the fit carries trapezoid transition parameters.
    pub fn has_transition(self) -> bool {
        matches!(self, ModelKind::M2 | ModelKind::M4 | ModelKind::M2Joint)
    }

    /// Whether the inflation indicator is sampled (as opposed to forced to 1).
    pub fn has_indicator(self) -> bool {
        matches!(self, ModelKind::M2 | ModelKind::M2Joint)
    }

    /// Whether country baselines are sampled rather than fixed at M1 medians.
    pub fn samples_beta(self) -> bool {
        matches!(self, ModelKind::M1 | ModelKind::M2Joint)
    }

    /// Whether the transition hyperparameters are sampled.
    pub fn samples_hyper(self) -> bool {
        self.has_indicator()
    }

    pub fn is_per_country(self) -> bool {
        matches!(self, ModelKind::M3 | ModelKind::M4)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

/// AR(1) hyperparameters `φ = (ρ, σ_ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub rho: f64,
    pub sigma_eps: f64,
}

/// Point estimates of the transition hyperparameters carried from M2 into M4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaHat {
    pub mu_xi: f64,
    pub sigma_xi: f64,
    pub mu_lambda: [f64; 3],
    pub sigma_lambda: [f64; 3],
    pub sigma_gamma: f64,
}

/// Point estimates imported from earlier stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedInputs {
    /// Country baseline medians from M1.
    #[serde(default)]
    pub beta_hat: BTreeMap<String, f64>,
    #[serde(default)]
    pub phi_hat: Option<Phi>,
    #[serde(default)]
    pub zeta_hat: Option<ZetaHat>,
    /// Regional baseline median of each country's region, keyed by country.
    #[serde(default)]
    pub beta_region_hat: BTreeMap<String, f64>,
    #[serde(default)]
    pub sigma_beta_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Target country of a per-country fit (M3, M4).
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub fixed: FixedInputs,
}

impl ModelSpec {
    pub fn m1() -> Self {
        ModelSpec {
            kind: ModelKind::M1,
            country: None,
            fixed: FixedInputs::default(),
        }
    }

    pub fn new(kind: ModelKind, fixed: FixedInputs) -> Self {
        ModelSpec {
            kind,
            country: None,
            fixed,
        }
    }

    pub fn for_country(mut self, code: &str) -> Self {
        self.country = Some(code.to_string());
        self
    }

    fn missing(&self, input: &str) -> ModelError {
        ModelError::MissingFixedInput {
            kind: self.kind,
            input: input.to_string(),
        }
    }

    /// Checks that the fixed inputs required by `kind` are present.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.kind == ModelKind::M1 {
            return Ok(());
        }
        self.phi()?;
        match self.kind {
            ModelKind::M2Joint => {
                self.sigma_beta_hat()?;
            }
            ModelKind::M4 => {
                self.zeta_hat()?;
            }
            _ => {}
        }
        if self.kind.is_per_country() && self.country.is_none() {
            return Err(self.missing("country"));
        }
        Ok(())
    }

    pub fn phi(&self) -> Result<Phi, ModelError> {
        self.fixed.phi_hat.ok_or_else(|| self.missing("phi_hat"))
    }

    pub fn zeta_hat(&self) -> Result<ZetaHat, ModelError> {
        self.fixed.zeta_hat.ok_or_else(|| self.missing("zeta_hat"))
    }

    pub fn sigma_beta_hat(&self) -> Result<f64, ModelError> {
        self.fixed
            .sigma_beta_hat
            .ok_or_else(|| self.missing("sigma_beta_hat"))
    }

    pub fn beta_hat(&self, country: &str) -> Result<f64, ModelError> {
        self.fixed
            .beta_hat
            .get(country)
            .copied()
            .ok_or_else(|| self.missing(&format!("beta_hat[{country}]")))
    }

    pub fn beta_region_hat(&self, country: &str) -> Result<f64, ModelError> {
        self.fixed
            .beta_region_hat
            .get(country)
            .copied()
            .ok_or_else(|| self.missing(&format!("beta_region_hat[{country}]")))
    }
}

/// One country as seen by a particular fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountrySlot {
    pub code: String,
    pub region: usize,
    /// First year of the stored fluctuation path.
    pub start_year: i32,
    /// Last year of the stored fluctuation path (the last observation year).
    pub end_year: i32,
    pub has_data: bool,
    /// Start-year prior anchors `(z, x)` for countries with a transition.
    pub anchors: Option<(f64, f64)>,
}

impl CountrySlot {
    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.start_year..=self.end_year
    }

    pub fn n_years(&self) -> usize {
        (self.end_year - self.start_year + 1) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub kind: ModelKind,
    pub regions: Vec<String>,
    pub slots: Vec<CountrySlot>,
}

impl ModelLayout {
    pub fn slot_index(&self, code: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.code == code)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    /// Regional baselines, indexed like [`ModelLayout::regions`].
    pub beta_region: Vec<f64>,
    /// Country baselines, indexed like [`ModelLayout::slots`].
    pub beta: Vec<f64>,
    pub sigma_beta: f64,
}

/// Fluctuation path `η_{c,t}` for `t = start_year, start_year + 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaPath {
    pub start_year: i32,
    pub values: Vec<f64>,
}

impl EtaPath {
    pub fn get(&self, year: i32) -> Option<f64> {
        let k = year.checked_sub(self.start_year)?;
        usize::try_from(k)
            .ok()
            .and_then(|k| self.values.get(k))
            .copied()
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationParams {
    pub rho: f64,
    pub sigma_eps: f64,
    pub eta: Vec<EtaPath>,
}

/// One trapezoid transition draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    pub gamma0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub xi: f64,
    pub delta: bool,
}

impl TransitionParams {
    pub fn new(
        gamma0: f64,
        lambda1: f64,
        lambda2: f64,
        lambda3: f64,
        xi: f64,
        delta: bool,
    ) -> Self {
        TransitionParams {
            gamma0,
            lambda1,
            lambda2,
            lambda3,
            xi,
            delta,
        }
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma0 + self.lambda1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma1() + self.lambda2
    }

    pub fn gamma3(&self) -> f64 {
        self.gamma2() + self.lambda3
    }

    pub fn is_valid(&self) -> bool {
        self.gamma0.is_finite()
            && self.xi >= 0.0
            && self.lambda1 >= 0.0
            && self.lambda2 >= 0.0
            && self.lambda3 >= 0.0
            && self.xi.is_finite()
            && self.gamma3().is_finite()
    }

    /// The same transition moved `shift` years later.
    pub fn shifted(&self, shift: f64) -> Self {
        TransitionParams {
            gamma0: self.gamma0 + shift,
            ..*self
        }
    }
}

/// Hyperparameters of the transition hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionHyper {
    pub mu_xi: f64,
    pub sigma_xi: f64,
    pub mu_lambda: [f64; 3],
    pub sigma_lambda: [f64; 3],
    pub sigma_gamma: f64,
    pub mu_pi: f64,
    pub sigma_pi: f64,
    /// Inflation probability per slot.
    pub pi: Vec<f64>,
    /// Student-t degrees of freedom of the start-year prior; always 3.
    pub t_df: f64,
}

impl TransitionHyper {
    pub fn from_zeta(z: &ZetaHat) -> Self {
        TransitionHyper {
            mu_xi: z.mu_xi,
            sigma_xi: z.sigma_xi,
            mu_lambda: z.mu_lambda,
            sigma_lambda: z.sigma_lambda,
            sigma_gamma: z.sigma_gamma,
            mu_pi: 0.0,
            sigma_pi: 1.0,
            pi: Vec::new(),
            t_df: 3.0,
        }
    }

    pub fn zeta(&self) -> ZetaHat {
        ZetaHat {
            mu_xi: self.mu_xi,
            sigma_xi: self.sigma_xi,
            mu_lambda: self.mu_lambda,
            sigma_lambda: self.sigma_lambda,
            sigma_gamma: self.sigma_gamma,
        }
    }
}

/// A complete parameter point of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub baseline: BaselineParams,
    pub fluctuation: FluctuationParams,
    /// Per-slot transition, `None` for fits without inflation.
    pub transitions: Vec<Option<TransitionParams>>,
    pub hyper: Option<TransitionHyper>,
    pub omega: [f64; 5],
}
