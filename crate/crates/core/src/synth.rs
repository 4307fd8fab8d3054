//! Synthetic worlds drawn from the generative model, with every latent value
//! recorded, for recovery experiments and oracle tests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    compute_tfr_anchors, BirthsTable, Country, CountryRegistry, Observation, ObservationSet,
    SourceType, TfrAnchors, TfrSeries, TfrTable,
};
use crate::mcmc::{names, write_chains_csv, DrawSet};
use crate::model::dist::{inv_logit, sample_trunc_t3_lower, sample_truncnorm_lower, std_normal};
use crate::model::{
    bounds, omega_at, stationary_log_sd, CountrySlot, FixedInputs, ModelKind, ModelLayout,
    ModelSpec, Phi, TransitionParams, ZetaHat,
};
use crate::projection::FitDraws;
use crate::{GRID_END, GRID_START};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{name} = {value} lies outside its prior support")]
    SpecOutOfSupport { name: String, value: f64 },
    #[error("invalid world specification: {0}")]
    InvalidSpec(String),
}

/// Regularly spaced observations of one source type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub first_year: f64,
    pub last_year: f64,
    pub step: f64,
    pub source: SourceType,
    pub sampling_sd: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            first_year: 1970.0,
            last_year: 2015.0,
            step: 1.0,
            source: SourceType::CrvsSrs,
            sampling_sd: 0.01,
        }
    }
}

impl Schedule {
    pub fn years(&self) -> Vec<f64> {
        let n = ((self.last_year - self.first_year) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|k| self.first_year + k as f64 * self.step)
            .collect()
    }
}

/// True values of every hyperparameter and the non-sampling errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrueHyper {
    pub beta_region: Vec<f64>,
    pub sigma_beta: f64,
    pub rho: f64,
    pub sigma_eps: f64,
    /// Indexed like [`SourceType::ALL`]; the registration entry must be 0.
    pub omega: [f64; 5],
    pub mu_xi: f64,
    pub sigma_xi: f64,
    pub mu_lambda: [f64; 3],
    pub sigma_lambda: [f64; 3],
    pub sigma_gamma: f64,
    pub mu_pi: f64,
    pub sigma_pi: f64,
}

impl Default for TrueHyper {
    fn default() -> Self {
        TrueHyper {
            beta_region: vec![1.05, 1.06, 1.04],
            sigma_beta: 0.02,
            rho: 0.6,
            sigma_eps: 0.01,
            omega: [0.0, 0.02, 0.03, 0.04, 0.06],
            mu_xi: 0.07,
            sigma_xi: 0.03,
            mu_lambda: [8.0, 15.0, 10.0],
            sigma_lambda: [3.0, 5.0, 3.0],
            sigma_gamma: 5.0,
            mu_pi: 0.0,
            sigma_pi: 1.0,
        }
    }
}

impl TrueHyper {
    pub fn phi(&self) -> Phi {
        Phi {
            rho: self.rho,
            sigma_eps: self.sigma_eps,
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

    fn check(&self, n_regions: usize) -> Result<(), SynthError> {
        let out = |name: &str, value: f64| {
            Err(SynthError::SpecOutOfSupport {
                name: name.to_string(),
                value,
            })
        };
        let within = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;
        if self.beta_region.len() < n_regions {
            return Err(SynthError::InvalidSpec(format!(
                "{} regional baselines for {n_regions} regions",
                self.beta_region.len()
            )));
        }
        for &b in &self.beta_region[..n_regions] {
            if !within(b, bounds::BETA_REGION) {
                return out("beta_region", b);
            }
        }
        let checks = [
            ("sigma_beta", self.sigma_beta, bounds::SIGMA_BETA),
            ("sigma_eps", self.sigma_eps, bounds::SIGMA_EPS),
            ("mu_xi", self.mu_xi, bounds::MU_XI),
            ("sigma_xi", self.sigma_xi, bounds::SIGMA_XI),
            ("sigma_gamma", self.sigma_gamma, bounds::SIGMA_GAMMA),
            ("sigma_pi", self.sigma_pi, bounds::SIGMA_PI),
        ];
        for (name, v, b) in checks {
            if !within(v, b) {
                return out(name, v);
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return out("rho", self.rho);
        }
        for k in 0..3 {
            if !within(self.mu_lambda[k], bounds::MU_LAMBDA) {
                return out("mu_lambda", self.mu_lambda[k]);
            }
            if !within(self.sigma_lambda[k], bounds::SIGMA_LAMBDA) {
                return out("sigma_lambda", self.sigma_lambda[k]);
            }
        }
        for s in SourceType::ALL {
            let w = self.omega[s.index()];
            let ok = if s.has_nonsampling_error() {
                within(w, bounds::OMEGA)
            } else {
                w == 0.0
            };
            if !ok {
                return out(&names::omega(s), w);
            }
        }
        if !self.mu_pi.is_finite() {
            return out("mu_pi", self.mu_pi);
        }
        Ok(())
    }
}

/// Logistic fertility decline from `high` to `low`. Each country crosses
/// TFR 2.9 at a year drawn uniformly from `location_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfrSpec {
    pub high: f64,
    pub low: f64,
    pub scale: f64,
    pub location_range: (f64, f64),
    /// Projection trajectories per country; each shifts the whole curve by
    /// a normal offset with sd `trajectory_sd` years.
    pub n_trajectories: usize,
    pub trajectory_sd: f64,
}

impl Default for TfrSpec {
    fn default() -> Self {
        TfrSpec {
            high: 6.5,
            low: 1.8,
            scale: 6.0,
            location_range: (1985.0, 2030.0),
            n_trajectories: 0,
            trajectory_sd: 3.0,
        }
    }
}

impl TfrSpec {
    fn curve(&self, location: f64) -> Vec<f64> {
        // Midpoint of the logistic that passes 2.9 at `location`.
        let mid = location - self.scale * ((self.high - self.low) / (2.9 - self.low) - 1.0).ln();
        (GRID_START..=GRID_END)
            .map(|t| {
                self.low + (self.high - self.low) / (1.0 + ((t as f64 - mid) / self.scale).exp())
            })
            .collect()
    }
}

/// Values that replace random draws for one country.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountryOverride {
    pub code: String,
    pub beta: Option<f64>,
    pub delta: Option<bool>,
    pub transition: Option<TransitionParams>,
    pub tfr_location: Option<f64>,
    pub schedule: Option<Schedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub regions: usize,
    pub countries_per_region: usize,
    /// The first this-many countries of every region are at risk.
    pub at_risk_per_region: usize,
    pub truth: TrueHyper,
    pub schedule: Schedule,
    pub tfr: TfrSpec,
    pub births_per_year: f64,
    pub births_unit: String,
    pub overrides: Vec<CountryOverride>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 1,
            regions: 3,
            countries_per_region: 6,
            at_risk_per_region: 0,
            truth: TrueHyper::default(),
            schedule: Schedule::default(),
            tfr: TfrSpec::default(),
            births_per_year: 1000.0,
            births_unit: "thousands".into(),
            overrides: Vec::new(),
        }
    }
}

/// Code of country `i` (1-based) in region `r` (1-based).
pub fn country_code(r: usize, i: usize) -> String {
    format!("R{r}C{i:02}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueCountry {
    pub code: String,
    pub region: usize,
    pub at_risk: bool,
    pub beta: f64,
    /// Fluctuations on the whole grid, 1950 to 2100.
    pub eta: Vec<f64>,
    /// Inflation probability; NaN outside the at-risk set.
    pub pi: f64,
    pub delta: bool,
    pub transition: Option<TransitionParams>,
    pub theta: Vec<f64>,
}

impl TrueCountry {
    fn at(v: &[f64], year: i32) -> f64 {
        v[(year - GRID_START) as usize]
    }

    pub fn eta_at(&self, year: i32) -> f64 {
        Self::at(&self.eta, year)
    }

    pub fn theta_at(&self, year: i32) -> f64 {
        Self::at(&self.theta, year)
    }

    /// `δ Ω` at `year`.
    pub fn inflation_at(&self, year: i32) -> f64 {
        match &self.transition {
            Some(tp) if self.delta => omega_at(tp, year as f64),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub hyper: TrueHyper,
    pub regions: Vec<String>,
    pub countries: Vec<TrueCountry>,
}

impl Truth {
    pub fn country(&self, code: &str) -> Option<&TrueCountry> {
        self.countries.iter().find(|c| c.code == code)
    }

    /// The truth as a single draw, named like fitted parameters, plus
    /// `theta[c,y]` for every grid year.
    pub fn to_draws(&self) -> DrawSet {
        let h = &self.hyper;
        let mut names_v = Vec::new();
        let mut vals = Vec::new();
        let mut push = |n: String, v: f64| {
            names_v.push(n);
            vals.push(vec![v]);
        };
        for (r, code) in self.regions.iter().enumerate() {
            push(names::beta_region(code), h.beta_region[r]);
        }
        push(names::SIGMA_BETA.into(), h.sigma_beta);
        push(names::RHO.into(), h.rho);
        push(names::SIGMA_EPS.into(), h.sigma_eps);
        for c in &self.countries {
            push(names::beta(&c.code), c.beta);
            for (k, e) in c.eta.iter().enumerate() {
                push(names::eta(&c.code, GRID_START + k as i32), *e);
            }
            if let Some(tp) = &c.transition {
                push(names::gamma0(&c.code), tp.gamma0);
                push(names::lambda(1, &c.code), tp.lambda1);
                push(names::lambda(2, &c.code), tp.lambda2);
                push(names::lambda(3, &c.code), tp.lambda3);
                push(names::xi(&c.code), tp.xi);
                push(names::delta(&c.code), f64::from(u8::from(c.delta)));
                push(names::pi(&c.code), c.pi);
            }
            for (k, t) in c.theta.iter().enumerate() {
                push(names::theta(&c.code, GRID_START + k as i32), *t);
            }
        }
        push(names::MU_XI.into(), h.mu_xi);
        push(names::SIGMA_XI.into(), h.sigma_xi);
        for k in 0..3 {
            push(names::mu_lambda(k + 1), h.mu_lambda[k]);
        }
        for k in 0..3 {
            push(names::sigma_lambda(k + 1), h.sigma_lambda[k]);
        }
        push(names::SIGMA_GAMMA.into(), h.sigma_gamma);
        push(names::MU_PI.into(), h.mu_pi);
        push(names::SIGMA_PI.into(), h.sigma_pi);
        for s in SourceType::ALL
            .into_iter()
            .filter(|s| s.has_nonsampling_error())
        {
            push(names::omega(s), h.omega[s.index()]);
        }
        DrawSet::new(names_v, vals)
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub observations: ObservationSet,
    pub registry: CountryRegistry,
    pub tfr: TfrTable,
    pub births: BirthsTable,
    pub anchors: BTreeMap<String, TfrAnchors>,
    pub truth: Truth,
}

impl World {
    /// Fixed inputs for the inflation fits set to the true values.
    pub fn true_fixed_inputs(&self) -> FixedInputs {
        let h = &self.truth.hyper;
        FixedInputs {
            beta_hat: self
                .truth
                .countries
                .iter()
                .map(|c| (c.code.clone(), c.beta))
                .collect(),
            phi_hat: Some(h.phi()),
            zeta_hat: Some(h.zeta()),
            beta_region_hat: self
                .truth
                .countries
                .iter()
                .map(|c| (c.code.clone(), h.beta_region[c.region]))
                .collect(),
            sigma_beta_hat: Some(h.sigma_beta),
        }
    }

    /// A baseline-model "fit" whose `n_draws` draws all equal the truth, so
    /// that its predictive distribution for new observations is exact.
    /// Only meaningful for worlds without inflation.
    pub fn oracle_fit(&self, n_draws: usize) -> FitDraws {
        let layout = ModelLayout {
            kind: ModelKind::M1,
            regions: self.truth.regions.clone(),
            slots: self
                .truth
                .countries
                .iter()
                .map(|c| CountrySlot {
                    code: c.code.clone(),
                    region: c.region,
                    start_year: GRID_START,
                    end_year: GRID_END,
                    has_data: true,
                    anchors: None,
                })
                .collect(),
        };
        FitDraws {
            spec: ModelSpec::m1(),
            layout,
            draws: self.truth.to_draws().select(&vec![0; n_draws]),
        }
    }

    /// Writes the four input tables and `truth.csv` into `dir`. Every file
    /// starts with `header` when one is given.
    pub fn write_bundle(&self, dir: &Path, header: Option<&str>) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> std::io::Result<BufWriter<File>> {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            if let Some(h) = header {
                writeln!(w, "{h}")?;
            }
            Ok(w)
        };
        let mut w = open("observations.csv")?;
        self.observations.write_csv(&mut w)?;
        w.flush()?;
        let mut w = open("countries.csv")?;
        self.registry.write_csv(&mut w)?;
        w.flush()?;
        let mut w = open("tfr.csv")?;
        self.tfr.write_csv(&mut w)?;
        w.flush()?;
        let mut w = open("births.csv")?;
        self.births.write_csv(&mut w)?;
        w.flush()?;
        let mut w = open("truth.csv")?;
        write_truth(&self.truth.to_draws(), &mut w)?;
        w.flush()
    }
}

/// Truth rows use the chain file layout with chain index 0.
fn write_truth<W: Write>(truth: &DrawSet, out: &mut W) -> std::io::Result<()> {
    let mut buf = Vec::new();
    write_chains_csv(std::slice::from_ref(truth), &mut buf)?;
    let text = String::from_utf8(buf).expect("chain output is UTF-8");
    let mut lines = text.lines();
    if let Some(h) = lines.next() {
        writeln!(out, "{h}")?;
    }
    for l in lines {
        writeln!(out, "0{}", &l[1..])?;
    }
    Ok(())
}

pub fn generate(spec: &WorldSpec) -> Result<World, SynthError> {
    let h = &spec.truth;
    h.check(spec.regions)?;
    if spec.regions == 0 || spec.countries_per_region == 0 {
        return Err(SynthError::InvalidSpec("empty world".into()));
    }
    if spec.at_risk_per_region > spec.countries_per_region {
        return Err(SynthError::InvalidSpec(
            "more at-risk countries than countries".into(),
        ));
    }
    if !(spec.schedule.step > 0.0) {
        return Err(SynthError::InvalidSpec(
            "schedule step must be positive".into(),
        ));
    }
    let overrides: BTreeMap<&str, &CountryOverride> = spec
        .overrides
        .iter()
        .map(|o| (o.code.as_str(), o))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_years = (GRID_END - GRID_START + 1) as usize;
    let region_codes: Vec<String> = (1..=spec.regions).map(|r| format!("R{r}")).collect();

    let mut countries = Vec::new();
    let mut registry_rows = Vec::new();
    let mut tfr = TfrTable::default();
    let mut births = BirthsTable::new(&spec.births_unit);
    let mut anchors = BTreeMap::new();
    let mut rows = Vec::new();
    for r in 0..spec.regions {
        for i in 0..spec.countries_per_region {
            let code = country_code(r + 1, i + 1);
            let ov = overrides.get(code.as_str()).copied();
            let at_risk = i < spec.at_risk_per_region;
            registry_rows.push(Country::new(
                &code,
                &format!("Country {code}"),
                &region_codes[r],
                at_risk,
            ));

            let location = ov.and_then(|o| o.tfr_location).unwrap_or_else(|| {
                rng.random_range(spec.tfr.location_range.0..=spec.tfr.location_range.1)
            });
            let trajectories = (0..spec.tfr.n_trajectories)
                .map(|_| {
                    spec.tfr
                        .curve(location + spec.tfr.trajectory_sd * std_normal(&mut rng))
                })
                .collect();
            tfr.insert(
                &code,
                TfrSeries {
                    years: (GRID_START..=GRID_END).collect(),
                    median: spec.tfr.curve(location),
                    trajectories,
                },
            );
            let anchor = compute_tfr_anchors(&tfr, &code).expect("series was just inserted");
            for y in GRID_START..=GRID_END {
                births.insert(&code, y, spec.births_per_year);
            }

            let beta = ov.and_then(|o| o.beta).unwrap_or_else(|| {
                (h.beta_region[r].ln() + h.sigma_beta * std_normal(&mut rng)).exp()
            });
            let mut eta = Vec::with_capacity(n_years);
            let mut x = stationary_log_sd(h.rho, h.sigma_eps) * std_normal(&mut rng);
            eta.push(x.exp());
            for _ in 1..n_years {
                x = h.rho * x + h.sigma_eps * std_normal(&mut rng);
                eta.push(x.exp());
            }

            let (pi, delta, transition) = if at_risk {
                let pi = inv_logit(h.mu_pi + h.sigma_pi * std_normal(&mut rng));
                let drawn = rng.random::<f64>() < pi;
                let delta = ov.and_then(|o| o.delta).unwrap_or(drawn);
                let (z, xl) = (anchor.z as f64, anchor.x as f64);
                let prior_draw = TransitionParams::new(
                    sample_trunc_t3_lower(&mut rng, xl, h.sigma_gamma, z),
                    sample_truncnorm_lower(&mut rng, h.mu_lambda[0], h.sigma_lambda[0], 0.0),
                    sample_truncnorm_lower(&mut rng, h.mu_lambda[1], h.sigma_lambda[1], 0.0),
                    sample_truncnorm_lower(&mut rng, h.mu_lambda[2], h.sigma_lambda[2], 0.0),
                    sample_truncnorm_lower(&mut rng, h.mu_xi, h.sigma_xi, 0.0),
                    delta,
                );
                let tp = match ov.and_then(|o| o.transition) {
                    Some(t) => TransitionParams { delta, ..t },
                    None => prior_draw,
                };
                (pi, delta, Some(tp))
            } else {
                (f64::NAN, false, None)
            };
            anchors.insert(code.clone(), anchor);

            let theta: Vec<f64> = (0..n_years)
                .map(|k| {
                    let year = (GRID_START + k as i32) as f64;
                    let infl = match &transition {
                        Some(tp) if delta => omega_at(tp, year),
                        _ => 0.0,
                    };
                    beta * eta[k] + infl
                })
                .collect();

            let sched = ov
                .and_then(|o| o.schedule.as_ref())
                .unwrap_or(&spec.schedule);
            let w = h.omega[sched.source.index()];
            let sd = (w * w + sched.sampling_sd * sched.sampling_sd).sqrt();
            for year in sched.years() {
                let o = Observation {
                    country_code: code.clone(),
                    year,
                    value: 0.0,
                    source_type: sched.source,
                    sampling_sd: sched.sampling_sd,
                };
                let k = (o.grid_year() - GRID_START) as usize;
                let value = (theta[k].ln() + sd * std_normal(&mut rng)).exp();
                rows.push(Observation { value, ..o });
            }

            countries.push(TrueCountry {
                code,
                region: r,
                at_risk,
                beta,
                eta,
                pi,
                delta,
                transition,
                theta,
            });
        }
    }
    let registry =
        CountryRegistry::new(registry_rows).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(World {
        observations: ObservationSet::new(rows),
        registry,
        tfr,
        births,
        anchors,
        truth: Truth {
            hyper: h.clone(),
            regions: region_codes,
            countries,
        },
    })
}
