use std::collections::BTreeMap;
use std::ops::{Range, RangeInclusive};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CountryClass, CountryClassification, ProjectionError, Scenario};
use crate::data::{ObservationSet, TfrAnchors, TfrTable};
use crate::mcmc::{names, CountryDraws, DrawSet, PosteriorChains};
use crate::model::dist::std_normal;
use crate::model::{omega_at, ModelKind, ModelLayout, ModelSpec, TransitionParams};
use crate::{GRID_END, GRID_START};

const N_YEARS: usize = (GRID_END - GRID_START + 1) as usize;
/// Stream offset that keeps the start-year draws apart from the path draws.
const TFR_STREAM: u64 = 1 << 32;

/// Pooled (or stacked) draws of one fit together with its description.
#[derive(Debug, Clone)]
pub struct FitDraws {
    pub spec: ModelSpec,
    pub layout: ModelLayout,
    pub draws: DrawSet,
}

impl FitDraws {
    pub fn from_chains(chains: &PosteriorChains) -> Self {
        FitDraws {
            spec: chains.spec.clone(),
            layout: chains.layout.clone(),
            draws: chains.pooled(),
        }
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub(crate) fn view(&self, code: &str) -> Result<CountryDraws<'_>, ProjectionError> {
        let slot = self
            .layout
            .slots
            .iter()
            .find(|s| s.code == code)
            .ok_or_else(|| ProjectionError::MissingFit {
                country: code.to_string(),
                model: self.spec.kind,
            })?;
        Ok(CountryDraws::new(&self.draws, &self.spec, slot)?)
    }

    /// Autocorrelation and innovation sd used to extend paths: per draw for
    /// the baseline fit, the fixed estimates otherwise.
    pub(crate) fn phi(&self, g: usize) -> Result<(f64, f64), ProjectionError> {
        if self.spec.kind == ModelKind::M1 {
            let col = |n: &str| {
                self.draws
                    .get(n)
                    .map(|v| v[g])
                    .ok_or_else(|| crate::mcmc::McmcError::UnknownParameter(n.to_string()))
            };
            Ok((col(names::RHO)?, col(names::SIGMA_EPS)?))
        } else {
            let p = self.spec.phi()?;
            Ok((p.rho, p.sigma_eps))
        }
    }
}

/// The fits a scenario draws from. Per-country fits are keyed by country.
#[derive(Debug, Clone)]
pub struct ScenarioFits {
    pub m1: FitDraws,
    pub m2: Option<FitDraws>,
    pub m3: BTreeMap<String, FitDraws>,
    pub m4: BTreeMap<String, FitDraws>,
}

impl ScenarioFits {
    fn all(&self) -> impl Iterator<Item = &FitDraws> {
        std::iter::once(&self.m1)
            .chain(self.m2.iter())
            .chain(self.m3.values())
            .chain(self.m4.values())
    }
}

/// Resamples every fit with replacement to `g` draws, leaving fits that
/// already hold `g` draws untouched, so that draw `g` can be paired across
/// fits.
pub fn align_draws<R: Rng + ?Sized>(fits: &mut ScenarioFits, g: usize, rng: &mut R) {
    let mut align = |f: &mut FitDraws| {
        if f.draws.len() != g {
            f.draws = f.draws.resample(g, rng);
        }
    };
    align(&mut fits.m1);
    if let Some(m2) = fits.m2.as_mut() {
        align(m2);
    }
    fits.m3.values_mut().for_each(&mut align);
    fits.m4.values_mut().for_each(&mut align);
}

/// Draws of one country's SRB from 1950 to 2100, split into the baseline
/// part `β η` and the inflation part `δ Ω`. Values are stored year-major:
/// entry `(t - 1950) * n_draws + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrbPaths {
    pub n_draws: usize,
    base: Vec<f64>,
    inflation: Vec<f64>,
    pub transitions: Vec<Option<TransitionParams>>,
}

impl SrbPaths {
    pub fn years() -> RangeInclusive<i32> {
        GRID_START..=GRID_END
    }

    fn row(&self, year: i32) -> std::ops::Range<usize> {
        let k = (year - GRID_START) as usize * self.n_draws;
        k..k + self.n_draws
    }

    /// `β η` draws in `year`.
    pub fn base_draws(&self, year: i32) -> &[f64] {
        &self.base[self.row(year)]
    }

    /// `δ Ω` draws in `year`.
    pub fn inflation_draws(&self, year: i32) -> &[f64] {
        &self.inflation[self.row(year)]
    }

    pub fn theta_draws(&self, year: i32) -> Vec<f64> {
        self.base_draws(year)
            .iter()
            .zip(self.inflation_draws(year))
            .map(|(b, i)| b + i)
            .collect()
    }

    /// Fraction of draws carrying an active transition.
    pub fn inflated_fraction(&self) -> f64 {
        let n = self
            .transitions
            .iter()
            .filter(|t| matches!(t, Some(tp) if tp.delta))
            .count();
        n as f64 / self.n_draws as f64
    }

    fn refresh_inflation(&mut self, g: usize) {
        let tp = self.transitions[g];
        for (k, year) in Self::years().enumerate() {
            self.inflation[k * self.n_draws + g] = match &tp {
                Some(tp) if tp.delta => omega_at(tp, year as f64),
                _ => 0.0,
            };
        }
    }
}

/// SRB paths of one country under one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CountryTrajectory {
    pub code: String,
    pub class: CountryClass,
    pub scenario: Scenario,
    pub paths: SrbPaths,
    /// Position of the country in code order; selects its random streams.
    pub stream: u64,
    /// Whether start years were spread by fertility trajectories.
    pub tfr_uncertainty: bool,
}

impl std::ops::Deref for CountryTrajectory {
    type Target = SrbPaths;

    fn deref(&self) -> &SrbPaths {
        &self.paths
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrajectories {
    pub scenario: Scenario,
    pub countries: Vec<CountryTrajectory>,
}

impl ScenarioTrajectories {
    pub fn country(&self, code: &str) -> Option<&CountryTrajectory> {
        self.countries.iter().find(|c| c.code == code)
    }
}

/// Builds the trajectories of every classified country under `scenario`.
/// All fits must hold the same number of draws (see [`align_draws`]).
pub fn assemble_scenario(
    scenario: Scenario,
    class: &CountryClassification,
    fits: &ScenarioFits,
    seed: u64,
) -> Result<ScenarioTrajectories, ProjectionError> {
    assemble_countries(scenario, class, fits, seed, 0..usize::MAX)
}

/// Like [`assemble_scenario`] but only for the countries at positions
/// `range` of the code-ordered classification. Draws do not depend on how
/// the countries are split into ranges.
pub fn assemble_countries(
    scenario: Scenario,
    class: &CountryClassification,
    fits: &ScenarioFits,
    seed: u64,
    range: Range<usize>,
) -> Result<ScenarioTrajectories, ProjectionError> {
    let g = fits.m1.n_draws();
    if let Some(f) = fits.all().find(|f| f.n_draws() != g) {
        return Err(ProjectionError::DrawCountMismatch {
            expected: g,
            found: f.n_draws(),
        });
    }
    let mut list: Vec<(&String, CountryClass)> = class.countries().collect();
    list.sort_by(|a, b| a.0.cmp(b.0));
    let end = range.end.min(list.len());
    let start = range.start.min(end);
    let countries = list[start..end]
        .par_iter()
        .enumerate()
        .map(|(i, (code, cl))| {
            assemble_country(scenario, code, *cl, fits, seed, (start + i) as u64)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScenarioTrajectories {
        scenario,
        countries,
    })
}

fn assemble_country(
    scenario: Scenario,
    code: &str,
    class: CountryClass,
    fits: &ScenarioFits,
    seed: u64,
    stream: u64,
) -> Result<CountryTrajectory, ProjectionError> {
    fn need<'f>(
        fit: Option<&'f FitDraws>,
        code: &str,
        model: ModelKind,
    ) -> Result<&'f FitDraws, ProjectionError> {
        fit.ok_or_else(|| ProjectionError::MissingFit {
            country: code.to_string(),
            model,
        })
    }
    let m2 = || need(fits.m2.as_ref(), code, ModelKind::M2);
    let (eta_fit, infl_fit) = match (class, scenario) {
        (CountryClass::Base, _) => (&fits.m1, None),
        (CountryClass::Inflation, _) | (CountryClass::FutureInflation, Scenario::S2) => {
            (m2()?, Some(m2()?))
        }
        (CountryClass::FutureInflation, Scenario::S1) => {
            (need(fits.m3.get(code), code, ModelKind::M3)?, None)
        }
        (CountryClass::FutureInflation, Scenario::S3) => {
            let m4 = need(fits.m4.get(code), code, ModelKind::M4)?;
            (m4, Some(m4))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let paths = build_paths(&fits.m1, eta_fit, infl_fit, code, &mut rng)?;
    Ok(CountryTrajectory {
        code: code.to_string(),
        class,
        scenario,
        paths,
        stream,
        tfr_uncertainty: false,
    })
}

/// SRB paths of `code` taken entirely from one fit: its own baseline,
/// fluctuations (extended to 2100 by the AR(1)) and inflation.
pub fn fit_paths(
    fit: &FitDraws,
    code: &str,
    seed: u64,
    stream: u64,
) -> Result<SrbPaths, ProjectionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let infl = fit.spec.kind.has_transition().then_some(fit);
    build_paths(fit, fit, infl, code, &mut rng)
}

fn build_paths<R: Rng + ?Sized>(
    beta_fit: &FitDraws,
    eta_fit: &FitDraws,
    infl_fit: Option<&FitDraws>,
    code: &str,
    rng: &mut R,
) -> Result<SrbPaths, ProjectionError> {
    let n = beta_fit.n_draws();
    let baseline = beta_fit.view(code)?;
    let eta_view = eta_fit.view(code)?;
    let infl_view = infl_fit.map(|f| f.view(code)).transpose()?;

    let mut base = vec![0.0; N_YEARS * n];
    let stored = eta_view.eta_years();
    let last = *stored.end();
    for g in 0..n {
        let beta = baseline.beta(g);
        let mut k = 0;
        let mut log_eta = 0.0;
        for year in GRID_START..=last.min(GRID_END) {
            if year >= *stored.start() {
                let e = eta_view.eta(g, year).expect("year inside the stored range");
                log_eta = e.ln();
                base[k * n + g] = beta * e;
            }
            k += 1;
        }
        if last < GRID_END {
            let (rho, sigma) = eta_fit.phi(g)?;
            for _ in last + 1..=GRID_END {
                log_eta = rho * log_eta + sigma * std_normal(rng);
                base[k * n + g] = beta * log_eta.exp();
                k += 1;
            }
        }
    }
    let transitions: Vec<Option<TransitionParams>> = match &infl_view {
        Some(v) => (0..n).map(|g| v.transition(g)).collect(),
        None => vec![None; n],
    };
    let mut paths = SrbPaths {
        n_draws: n,
        base,
        inflation: vec![0.0; N_YEARS * n],
        transitions,
    };
    if infl_view.is_some() {
        for g in 0..n {
            paths.refresh_inflation(g);
        }
    }
    Ok(paths)
}

/// Last grid year with an observation, per country.
pub fn last_observation_years(obs: &ObservationSet) -> BTreeMap<String, i32> {
    let mut out = BTreeMap::new();
    for o in obs {
        let y = out.entry(o.country_code.clone()).or_insert(i32::MIN);
        *y = (*y).max(o.grid_year());
    }
    out
}

/// Spreads future start years by fertility uncertainty. For each
/// future-inflation country and each draw whose start year lies after the
/// country's last observation, one TFR trajectory is picked at random and
/// the transition is moved by the difference between that trajectory's
/// location year and the median-based one. Scenario S1 is left unchanged.
pub fn inject_tfr_start_uncertainty(
    traj: &mut ScenarioTrajectories,
    tfr: &TfrTable,
    anchors: &BTreeMap<String, TfrAnchors>,
    last_obs_year: &BTreeMap<String, i32>,
    seed: u64,
) {
    if traj.scenario == Scenario::S1 {
        return;
    }
    for c in traj.countries.iter_mut() {
        if c.class != CountryClass::FutureInflation {
            continue;
        }
        let series = tfr.get(&c.code).filter(|s| !s.trajectories.is_empty());
        let (Some(series), Some(anchor)) = (series, anchors.get(&c.code)) else {
            warn!(
                "no TFR trajectories for {}; start years keep the median anchor only",
                c.code
            );
            continue;
        };
        let locations: Vec<f64> = (0..series.trajectories.len())
            .map(|j| series.trajectory_location(j) as f64)
            .collect();
        let x_hat = anchor.x as f64;
        let last = last_obs_year.get(&c.code).copied().unwrap_or(i32::MIN) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(TFR_STREAM + c.stream);
        for g in 0..c.n_draws {
            let Some(tp) = c.transitions[g] else { continue };
            if tp.gamma0 <= last {
                continue;
            }
            let j = rng.random_range(0..locations.len());
            c.paths.transitions[g] = Some(tp.shifted(locations[j] - x_hat));
            c.paths.refresh_inflation(g);
        }
        c.tfr_uncertainty = true;
    }
}
