//! Adaptive Metropolis-within-Gibbs sampler shared by all model fits.
//!
//! Fluctuation paths of countries without an active transition are drawn
//! exactly by forward-filtering backward-sampling (jointly with the baseline
//! in the baseline model). Paths under an active transition are updated site
//! by site. Everything else moves by random-walk Metropolis on a transformed
//! scale with step sizes tuned during burn-in, plus a Gibbs step for the
//! inflation indicator.
//!
//! Countries without data carry no fluctuation state: their paths and (in
//! the baseline model) their baselines are integrated out of the sampler and
//! drawn from the prior when a draw is kept. The same holds for the years
//! between 1950 and a country's first observation.

use std::collections::BTreeMap;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::chains::{names, DrawSet, PosteriorChains};
use super::kalman::{ffbs_level_path, ffbs_path};
use super::{McmcConfig, McmcError};
use crate::data::{CountryRegistry, ObservationSet, SourceType, TfrAnchors};
use crate::likelihood::DEFAULT_VARIANCE_FLOOR;
use crate::model::dist::{
    bernoulli_logit_ln_pmf, inv_logit, logistic_ln_pdf, normal_ln_pdf, normal_ln_pdf_var,
    sample_trunc_t3_lower, sample_truncnorm_lower, std_normal,
};
use crate::model::prior::{gamma0_term, positive_term, uniform, uniform_scale};
use crate::model::{
    bounds, omega_at, stationary_log_sd, CountrySlot, ModelKind, ModelLayout, ModelSpec,
    TransitionParams, RHO_CAP,
};
use crate::GRID_START;

/// Auxiliary inputs of a fit.
pub struct FitInputs<'a> {
    pub data: &'a ObservationSet,
    pub registry: &'a CountryRegistry,
    /// Fertility anchors; required for every country with a transition.
    pub anchors: &'a BTreeMap<String, TfrAnchors>,
}

/// Runs `cfg.n_chains` chains in parallel and returns their kept draws.
pub fn fit(
    spec: &ModelSpec,
    inputs: &FitInputs<'_>,
    cfg: &McmcConfig,
) -> Result<PosteriorChains, McmcError> {
    cfg.validate()?;
    let ctx = Context::build(spec, inputs)?;
    debug!(
        "fitting {} on {} countries, {} observations",
        spec.kind,
        ctx.slots.len(),
        ctx.slots.iter().map(|s| s.obs.len()).sum::<usize>()
    );
    let runs: Vec<_> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|k| run_chain(&ctx, cfg, k))
        .collect();
    let mut chains = Vec::with_capacity(runs.len());
    let mut acceptance = Vec::with_capacity(runs.len());
    for r in runs {
        let (draws, acc) = r?;
        chains.push(draws);
        acceptance.push(acc);
    }
    Ok(PosteriorChains {
        spec: spec.clone(),
        layout: ctx.layout.clone(),
        config: cfg.clone(),
        chains,
        acceptance,
    })
}

fn run_chain(
    ctx: &Context,
    cfg: &McmcConfig,
    k: usize,
) -> Result<(DrawSet, BTreeMap<String, f64>), McmcError> {
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
    let mut chain = Chain::new(ctx, rng);
    let kept = cfg.kept_per_chain();
    let n_par = ctx.names.len();
    let mut out: Vec<Vec<f64>> = (0..n_par).map(|_| Vec::with_capacity(kept)).collect();
    let mut batch = 0;
    for it in 0..cfg.n_burnin {
        chain.sweep();
        if (it + 1) % cfg.adapt_window == 0 {
            batch += 1;
            chain.steps.adapt(batch, cfg.target_accept);
        }
    }
    chain.steps.freeze();
    let mut row = Vec::with_capacity(n_par);
    for _ in 0..kept {
        for _ in 0..cfg.thinning {
            chain.sweep();
        }
        row.clear();
        chain.emit(&mut row);
        debug_assert_eq!(row.len(), n_par);
        for (p, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(McmcError::NonFiniteDensity(ctx.names[p].clone()));
            }
            out[p].push(v);
        }
    }
    Ok((
        DrawSet::new(ctx.names.clone(), out),
        chain.steps.acceptance(),
    ))
}

struct Obs {
    t: usize,
    year: f64,
    log_y: f64,
    v2: f64,
    src: usize,
}

struct Slot {
    code: String,
    region: usize,
    anchors: (f64, f64),
    transition: bool,
    state_start: i32,
    /// Years of sampled path; zero for countries without data.
    n: usize,
    store_start: i32,
    end_year: i32,
    obs: Vec<Obs>,
    obs_t: Vec<usize>,
    log_y: Vec<f64>,
    by_t: Vec<(usize, usize)>,
    lb_fixed: f64,
    /// Mean and sd of the normal baseline prior of the joint inflation fit.
    beta_prior: (f64, f64),
}

struct Context {
    kind: ModelKind,
    layout: ModelLayout,
    slots: Vec<Slot>,
    region_slots: Vec<Vec<usize>>,
    src_slots: [Vec<usize>; 5],
    phi: (f64, f64),
    zeta: Option<Hyper>,
    floor: f64,
    names: Vec<String>,
}

impl Context {
    fn build(spec: &ModelSpec, inputs: &FitInputs<'_>) -> Result<Self, McmcError> {
        spec.validate()?;
        let kind = spec.kind;
        let reg = inputs.registry;
        let countries: Vec<_> = match kind {
            ModelKind::M1 => reg.countries().iter().collect(),
            ModelKind::M2 | ModelKind::M2Joint => {
                reg.countries().iter().filter(|c| c.at_risk).collect()
            }
            ModelKind::M3 | ModelKind::M4 => {
                let code = spec.country.as_deref().unwrap_or_default();
                vec![reg
                    .get(code)
                    .ok_or_else(|| McmcError::UnknownCountry(code.to_string()))?]
            }
        };
        let mut by_country: BTreeMap<&str, Vec<&crate::data::Observation>> = BTreeMap::new();
        for o in inputs.data {
            by_country
                .entry(o.country_code.as_str())
                .or_default()
                .push(o);
        }
        let mut slots = Vec::with_capacity(countries.len());
        let mut used = 0;
        for c in &countries {
            let rows = by_country
                .get(c.code.as_str())
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            used += rows.len();
            let anchors = if kind.has_transition() {
                let a = inputs
                    .anchors
                    .get(&c.code)
                    .ok_or_else(|| McmcError::MissingAnchors(c.code.clone()))?;
                (a.z as f64, a.x as f64)
            } else {
                (f64::NAN, f64::NAN)
            };
            let lb_fixed = if kind.samples_beta() {
                f64::NAN
            } else {
                spec.beta_hat(&c.code)?.ln()
            };
            let beta_prior = if kind == ModelKind::M2Joint {
                (spec.beta_region_hat(&c.code)?, spec.sigma_beta_hat()?)
            } else {
                (f64::NAN, f64::NAN)
            };
            let region = reg.region_index(&c.region_code).unwrap_or(0);
            let (state_start, end_year) = match (rows.first(), rows.last()) {
                (Some(f), Some(l)) => (f.grid_year(), l.grid_year()),
                _ => (GRID_START, GRID_START),
            };
            let n = if rows.is_empty() {
                0
            } else {
                (end_year - state_start + 1) as usize
            };
            let obs: Vec<Obs> = rows
                .iter()
                .map(|o| Obs {
                    t: (o.grid_year() - state_start) as usize,
                    year: o.grid_year() as f64,
                    log_y: o.value.ln(),
                    v2: o.sampling_sd * o.sampling_sd,
                    src: o.source_type.index(),
                })
                .collect();
            let mut by_t = vec![(0, 0); n];
            for (j, o) in obs.iter().enumerate() {
                if by_t[o.t].1 == 0 {
                    by_t[o.t] = (j, j + 1);
                } else {
                    by_t[o.t].1 = j + 1;
                }
            }
            slots.push(Slot {
                code: c.code.clone(),
                region,
                anchors,
                transition: kind.has_transition(),
                state_start,
                n,
                store_start: state_start.min(GRID_START),
                end_year,
                obs_t: obs.iter().map(|o| o.t).collect(),
                log_y: obs.iter().map(|o| o.log_y).collect(),
                obs,
                by_t,
                lb_fixed,
                beta_prior,
            });
        }
        if used == 0 {
            return Err(McmcError::NoData);
        }
        if used < inputs.data.len() {
            warn!(
                "{} observations belong to countries outside the {kind} fit and are ignored",
                inputs.data.len() - used
            );
        }
        let regions = reg.regions().to_vec();
        let mut region_slots = vec![Vec::new(); regions.len()];
        let mut src_slots: [Vec<usize>; 5] = Default::default();
        for (i, s) in slots.iter().enumerate() {
            if s.n > 0 {
                region_slots[s.region].push(i);
            }
            for (k, list) in src_slots.iter_mut().enumerate() {
                if s.obs.iter().any(|o| o.src == k) {
                    list.push(i);
                }
            }
        }
        let phi = match kind {
            ModelKind::M1 => (f64::NAN, f64::NAN),
            _ => {
                let p = spec.phi()?;
                if !(0.0..1.0).contains(&p.rho) {
                    return Err(McmcError::Model(crate::model::ModelError::RhoOutOfRange(
                        p.rho,
                    )));
                }
                (p.rho.min(RHO_CAP), p.sigma_eps)
            }
        };
        let zeta = match kind {
            ModelKind::M4 => Some(Hyper::from_zeta(&spec.zeta_hat()?)),
            _ => None,
        };
        let layout = ModelLayout {
            kind,
            regions,
            slots: slots
                .iter()
                .map(|s| CountrySlot {
                    code: s.code.clone(),
                    region: s.region,
                    start_year: s.store_start,
                    end_year: s.end_year,
                    has_data: s.n > 0,
                    anchors: s.transition.then_some(s.anchors),
                })
                .collect(),
        };
        let mut ctx = Context {
            kind,
            layout,
            slots,
            region_slots,
            src_slots,
            phi,
            zeta,
            floor: DEFAULT_VARIANCE_FLOOR,
            names: Vec::new(),
        };
        ctx.names = ctx.param_names();
        Ok(ctx)
    }

    fn param_names(&self) -> Vec<String> {
        let kind = self.kind;
        let mut v = Vec::new();
        if kind == ModelKind::M1 {
            v.extend(self.layout.regions.iter().map(|r| names::beta_region(r)));
            v.extend([names::SIGMA_BETA, names::RHO, names::SIGMA_EPS].map(String::from));
        }
        for s in &self.slots {
            let c = &s.code;
            if kind.samples_beta() {
                v.push(names::beta(c));
            }
            v.extend((s.store_start..=s.end_year).map(|y| names::eta(c, y)));
            if s.transition {
                v.push(names::gamma0(c));
                v.extend((1..=3).map(|k| names::lambda(k, c)));
                v.push(names::xi(c));
                if kind.has_indicator() {
                    v.push(names::delta(c));
                    v.push(names::pi(c));
                }
            }
        }
        if kind.samples_hyper() {
            v.push(names::MU_XI.into());
            v.push(names::SIGMA_XI.into());
            v.extend((1..=3).map(names::mu_lambda));
            v.extend((1..=3).map(names::sigma_lambda));
            v.extend([names::SIGMA_GAMMA, names::MU_PI, names::SIGMA_PI].map(String::from));
        }
        v.extend(
            SourceType::ALL
                .into_iter()
                .filter(|s| s.has_nonsampling_error())
                .map(names::omega),
        );
        v
    }
}

#[derive(Debug, Clone, Copy)]
struct Hyper {
    mu_xi: f64,
    sigma_xi: f64,
    mu_l: [f64; 3],
    sigma_l: [f64; 3],
    sigma_gamma: f64,
    mu_pi: f64,
    sigma_pi: f64,
}

impl Hyper {
    fn from_zeta(z: &crate::model::ZetaHat) -> Self {
        Hyper {
            mu_xi: z.mu_xi,
            sigma_xi: z.sigma_xi,
            mu_l: z.mu_lambda,
            sigma_l: z.sigma_lambda,
            sigma_gamma: z.sigma_gamma,
            mu_pi: 0.0,
            sigma_pi: 1.0,
        }
    }

    fn transition_prior(&self, tp: &TransitionParams, anchors: (f64, f64)) -> f64 {
        positive_term(tp.xi, self.mu_xi, self.sigma_xi)
            + positive_term(tp.lambda1, self.mu_l[0], self.sigma_l[0])
            + positive_term(tp.lambda2, self.mu_l[1], self.sigma_l[1])
            + positive_term(tp.lambda3, self.mu_l[2], self.sigma_l[2])
            + gamma0_term(tp.gamma0, anchors, self.sigma_gamma)
    }
}

/// Log density of a slot's observations.
fn loglik(s: &Slot, var: &[f64], lb: f64, h: &[f64], tp: Option<&TransitionParams>) -> f64 {
    let mut ll = 0.0;
    match tp {
        Some(tp) => {
            for (o, &v) in s.obs.iter().zip(var) {
                let theta = (lb + h[o.t]).exp() + omega_at(tp, o.year);
                ll += normal_ln_pdf_var(o.log_y, theta.ln(), v);
            }
        }
        None => {
            for (o, &v) in s.obs.iter().zip(var) {
                ll += normal_ln_pdf_var(o.log_y, lb + h[o.t], v);
            }
        }
    }
    ll
}

/// Stationary AR(1) log density of a path.
fn ar_lp(h: &[f64], rho: f64, sigma: f64) -> f64 {
    let Some((&first, _)) = h.split_first() else {
        return 0.0;
    };
    let s2 = sigma * sigma;
    let mut ss = first * first * (1.0 - rho * rho);
    for w in h.windows(2) {
        let e = w[1] - rho * w[0];
        ss += e * e;
    }
    -0.5 * ss / s2 - h.len() as f64 * (sigma.ln() + 0.918_938_533_204_672_8)
        + 0.5 * (1.0 - rho * rho).ln()
}

#[inline]
fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

struct Step {
    log_scale: f64,
    acc: u32,
    tries: u32,
    kept_acc: u64,
    kept_tries: u64,
}

struct Steps {
    v: Vec<Step>,
    names: Vec<String>,
    frozen: bool,
}

impl Steps {
    fn add(&mut self, name: String, scale: f64) -> usize {
        self.v.push(Step {
            log_scale: scale.ln(),
            acc: 0,
            tries: 0,
            kept_acc: 0,
            kept_tries: 0,
        });
        self.names.push(name);
        self.v.len() - 1
    }

    #[inline]
    fn scale(&self, id: usize) -> f64 {
        self.v[id].log_scale.exp()
    }

    #[inline]
    fn record(&mut self, id: usize, accepted: bool) {
        let s = &mut self.v[id];
        if self.frozen {
            s.kept_tries += 1;
            s.kept_acc += accepted as u64;
        } else {
            s.tries += 1;
            s.acc += accepted as u32;
        }
    }

    fn adapt(&mut self, batch: usize, target: f64) {
        let d = (1.0 / (batch as f64).sqrt()).min(0.5);
        for s in &mut self.v {
            if s.tries > 0 {
                let rate = s.acc as f64 / s.tries as f64;
                s.log_scale += if rate > target { d } else { -d };
                s.log_scale = s.log_scale.clamp(-25.0, 6.0);
            }
            s.acc = 0;
            s.tries = 0;
        }
    }

    fn freeze(&mut self) {
        self.frozen = true;
    }

    fn acceptance(&self) -> BTreeMap<String, f64> {
        self.v
            .iter()
            .zip(&self.names)
            .filter(|(s, _)| s.kept_tries > 0)
            .map(|(s, n)| (n.clone(), s.kept_acc as f64 / s.kept_tries as f64))
            .collect()
    }
}

struct SlotSteps {
    h: usize,
    lb: usize,
    shift: usize,
    g0: usize,
    l: [usize; 3],
    xi: usize,
    g0l1: usize,
    l23: usize,
    lpi: usize,
}

struct GlobalSteps {
    beta_region: Vec<usize>,
    sigma_beta: usize,
    rho: usize,
    sigma_eps: usize,
    mu_xi: usize,
    sigma_xi: usize,
    mu_l: [usize; 3],
    sigma_l: [usize; 3],
    sigma_gamma: usize,
    mu_pi: usize,
    sigma_pi: usize,
    omega: [usize; 5],
}

struct State {
    beta_region: Vec<f64>,
    sigma_beta: f64,
    rho: f64,
    sigma_eps: f64,
    lb: Vec<f64>,
    h: Vec<Vec<f64>>,
    tp: Vec<TransitionParams>,
    lpi: Vec<f64>,
    hyper: Hyper,
    omega: [f64; 5],
    var: Vec<Vec<f64>>,
    ll: Vec<f64>,
}

struct Chain<'a> {
    ctx: &'a Context,
    rng: ChaCha8Rng,
    st: State,
    steps: Steps,
    ss: Vec<SlotSteps>,
    gs: GlobalSteps,
    scratch1: Vec<(f64, f64)>,
    scratch2: Vec<[f64; 5]>,
    buf: Vec<f64>,
    buf2: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(ctx: &'a Context, mut rng: ChaCha8Rng) -> Self {
        let mut steps = Steps {
            v: Vec::new(),
            names: Vec::new(),
            frozen: false,
        };
        let ss = ctx
            .slots
            .iter()
            .map(|s| {
                let c = &s.code;
                SlotSteps {
                    h: steps.add(format!("eta[{c}]"), 0.01),
                    lb: steps.add(names::beta(c), 0.01),
                    shift: steps.add(format!("level_shift[{c}]"), 0.01),
                    g0: steps.add(names::gamma0(c), 2.0),
                    l: [1, 2, 3].map(|k| steps.add(names::lambda(k, c), 0.3)),
                    xi: steps.add(names::xi(c), 0.3),
                    g0l1: steps.add(format!("gamma0_lambda1[{c}]"), 2.0),
                    l23: steps.add(format!("lambda2_lambda3[{c}]"), 2.0),
                    lpi: steps.add(names::pi(c), 1.0),
                }
            })
            .collect();
        let gs = GlobalSteps {
            beta_region: ctx
                .layout
                .regions
                .iter()
                .map(|r| steps.add(names::beta_region(r), 0.005))
                .collect(),
            sigma_beta: steps.add(names::SIGMA_BETA.into(), 0.3),
            rho: steps.add(names::RHO.into(), 0.3),
            sigma_eps: steps.add(names::SIGMA_EPS.into(), 0.2),
            mu_xi: steps.add(names::MU_XI.into(), 0.3),
            sigma_xi: steps.add(names::SIGMA_XI.into(), 0.3),
            mu_l: [1, 2, 3].map(|k| steps.add(names::mu_lambda(k), 0.3)),
            sigma_l: [1, 2, 3].map(|k| steps.add(names::sigma_lambda(k), 0.3)),
            sigma_gamma: steps.add(names::SIGMA_GAMMA.into(), 0.3),
            mu_pi: steps.add(names::MU_PI.into(), 0.5),
            sigma_pi: steps.add(names::SIGMA_PI.into(), 0.3),
            omega: SourceType::ALL.map(|s| steps.add(names::omega(s), 0.3)),
        };
        let st = init_state(ctx, &mut rng);
        Chain {
            ctx,
            rng,
            st,
            steps,
            ss,
            gs,
            scratch1: Vec::new(),
            scratch2: Vec::new(),
            buf: Vec::new(),
            buf2: Vec::new(),
        }
    }

    fn hyper(&self) -> Hyper {
        self.ctx.zeta.unwrap_or(self.st.hyper)
    }

    #[inline]
    fn active(&self, i: usize) -> bool {
        self.ctx.slots[i].transition && (self.ctx.kind == ModelKind::M4 || self.st.tp[i].delta)
    }

    fn slot_ll(&self, i: usize) -> f64 {
        let tp = self.active(i).then_some(&self.st.tp[i]);
        self.slot_ll_with(i, tp)
    }

    fn slot_ll_with(&self, i: usize, tp: Option<&TransitionParams>) -> f64 {
        let st = &self.st;
        loglik(&self.ctx.slots[i], &st.var[i], st.lb[i], &st.h[i], tp)
    }

    fn sweep(&mut self) {
        for i in 0..self.ctx.slots.len() {
            self.update_slot(i);
        }
        match self.ctx.kind {
            ModelKind::M1 => self.update_baseline_hyper(),
            ModelKind::M2 | ModelKind::M2Joint => self.update_transition_hyper(),
            _ => {}
        }
        self.update_omega();
    }

    fn update_slot(&mut self, i: usize) {
        let ctx = self.ctx;
        let s = &ctx.slots[i];
        if s.n > 0 {
            if self.active(i) {
                self.update_path_sites(i);
            } else {
                self.update_path_exact(i);
            }
            if ctx.kind == ModelKind::M2Joint {
                self.update_joint_baseline(i);
            }
        }
        if s.transition {
            self.update_transition(i);
            if ctx.kind.has_indicator() {
                self.update_delta(i);
                self.update_lpi(i);
            }
        }
    }

    fn update_path_exact(&mut self, i: usize) {
        let s = &self.ctx.slots[i];
        let (rho, sigma) = (self.st.rho, self.st.sigma_eps);
        if self.ctx.kind == ModelKind::M1 {
            let b_mean = self.st.beta_region[s.region].ln();
            let b_var = self.st.sigma_beta * self.st.sigma_beta;
            let lb = ffbs_level_path(
                &s.obs_t,
                &s.log_y,
                &self.st.var[i],
                b_mean,
                b_var,
                rho,
                sigma,
                &mut self.rng,
                &mut self.st.h[i],
                &mut self.scratch2,
            );
            self.st.lb[i] = lb;
        } else {
            let lb = self.st.lb[i];
            self.buf.clear();
            self.buf.extend(s.log_y.iter().map(|y| y - lb));
            ffbs_path(
                &s.obs_t,
                &self.buf,
                &self.st.var[i],
                rho,
                sigma,
                &mut self.rng,
                &mut self.st.h[i],
                &mut self.scratch1,
            );
        }
        self.st.ll[i] = self.slot_ll(i);
    }

    fn update_path_sites(&mut self, i: usize) {
        let s = &self.ctx.slots[i];
        let (rho, sigma) = (self.st.rho, self.st.sigma_eps);
        let s2 = sigma * sigma;
        let p0 = s2 / (1.0 - rho * rho);
        let tp = self.st.tp[i];
        let lb = self.st.lb[i];
        self.buf.clear();
        self.buf.extend(s.obs.iter().map(|o| omega_at(&tp, o.year)));
        let step_id = self.ss[i].h;
        let step = self.steps.scale(step_id);
        let var = &self.st.var[i];
        let local = |x: f64, a: usize, b: usize, om: &[f64]| -> f64 {
            (a..b)
                .map(|j| normal_ln_pdf_var(s.obs[j].log_y, ((lb + x).exp() + om[j]).ln(), var[j]))
                .sum()
        };
        let n = s.n;
        for t in 0..n {
            let h = &self.st.h[i];
            let (mut prec, mut num) = if t == 0 {
                (1.0 / p0, 0.0)
            } else {
                (1.0 / s2, rho * h[t - 1] / s2)
            };
            if t + 1 < n {
                prec += rho * rho / s2;
                num += rho * h[t + 1] / s2;
            }
            let mean = num / prec;
            let (a, b) = s.by_t[t];
            if a == b {
                let draw = mean + std_normal(&mut self.rng) / prec.sqrt();
                self.st.h[i][t] = draw;
                continue;
            }
            let cur = h[t];
            let prop = cur + step * std_normal(&mut self.rng);
            let lr = local(prop, a, b, &self.buf)
                - local(cur, a, b, &self.buf)
                - 0.5 * prec * ((prop - mean).powi(2) - (cur - mean).powi(2));
            let ok = accept(&mut self.rng, lr);
            self.steps.record(step_id, ok);
            if ok {
                self.st.h[i][t] = prop;
            }
        }
        self.st.ll[i] = self.slot_ll(i);
    }

    /// Baseline of the joint inflation fit: random walk on `log β`, plus a
    /// move that trades the baseline against the level of the path.
    fn update_joint_baseline(&mut self, i: usize) {
        let s = &self.ctx.slots[i];
        let (mean, sd) = s.beta_prior;
        let prior = |lb: f64| normal_ln_pdf(lb.exp(), mean, sd) + lb;
        let tp = self.active(i).then_some(self.st.tp[i]);
        let (rho, sigma) = (self.st.rho, self.st.sigma_eps);

        let id = self.ss[i].lb;
        let cur = self.st.lb[i];
        let prop = cur + self.steps.scale(id) * std_normal(&mut self.rng);
        let ll_prop = loglik(s, &self.st.var[i], prop, &self.st.h[i], tp.as_ref());
        let lr = ll_prop + prior(prop) - self.st.ll[i] - prior(cur);
        let ok = accept(&mut self.rng, lr);
        self.steps.record(id, ok);
        if ok {
            self.st.lb[i] = prop;
            self.st.ll[i] = ll_prop;
        }

        let id = self.ss[i].shift;
        let d = self.steps.scale(id) * std_normal(&mut self.rng);
        let cur = self.st.lb[i];
        self.buf2.clear();
        self.buf2.extend(self.st.h[i].iter().map(|h| h - d));
        let ll_prop = loglik(s, &self.st.var[i], cur + d, &self.buf2, tp.as_ref());
        let lr = ll_prop + prior(cur + d) + ar_lp(&self.buf2, rho, sigma)
            - self.st.ll[i]
            - prior(cur)
            - ar_lp(&self.st.h[i], rho, sigma);
        let ok = accept(&mut self.rng, lr);
        self.steps.record(id, ok);
        if ok {
            self.st.lb[i] = cur + d;
            std::mem::swap(&mut self.st.h[i], &mut self.buf2);
            self.st.ll[i] = ll_prop;
        }
    }

    fn draw_transition(&mut self, i: usize, h: &Hyper) -> TransitionParams {
        let (z, x) = self.ctx.slots[i].anchors;
        let r = &mut self.rng;
        TransitionParams {
            xi: sample_truncnorm_lower(r, h.mu_xi, h.sigma_xi, 0.0),
            lambda1: sample_truncnorm_lower(r, h.mu_l[0], h.sigma_l[0], 0.0),
            lambda2: sample_truncnorm_lower(r, h.mu_l[1], h.sigma_l[1], 0.0),
            lambda3: sample_truncnorm_lower(r, h.mu_l[2], h.sigma_l[2], 0.0),
            gamma0: sample_trunc_t3_lower(r, x, h.sigma_gamma, z),
            delta: self.st.tp[i].delta,
        }
    }

    fn update_transition(&mut self, i: usize) {
        let h = self.hyper();
        if !self.active(i) || self.ctx.slots[i].n == 0 {
            // Conditional equals the hierarchical prior.
            self.st.tp[i] = self.draw_transition(i, &h);
            return;
        }
        let ss = &self.ss[i];
        let (g0, l, xi, g0l1, l23) = (ss.g0, ss.l, ss.xi, ss.g0l1, ss.l23);

        let cur = self.st.tp[i];
        let z = self.steps.scale(g0) * std_normal(&mut self.rng);
        self.try_transition(
            i,
            g0,
            &h,
            TransitionParams {
                gamma0: cur.gamma0 + z,
                ..cur
            },
            0.0,
        );

        for k in 0..3 {
            let cur = self.st.tp[i];
            let f = (self.steps.scale(l[k]) * std_normal(&mut self.rng)).exp();
            let mut prop = cur;
            let old = match k {
                0 => std::mem::replace(&mut prop.lambda1, cur.lambda1 * f),
                1 => std::mem::replace(&mut prop.lambda2, cur.lambda2 * f),
                _ => std::mem::replace(&mut prop.lambda3, cur.lambda3 * f),
            };
            let jac = if old > 0.0 { f.ln() } else { f64::NEG_INFINITY };
            self.try_transition(i, l[k], &h, prop, jac);
        }

        let cur = self.st.tp[i];
        let f = (self.steps.scale(xi) * std_normal(&mut self.rng)).exp();
        let jac = if cur.xi > 0.0 {
            f.ln()
        } else {
            f64::NEG_INFINITY
        };
        self.try_transition(
            i,
            xi,
            &h,
            TransitionParams {
                xi: cur.xi * f,
                ..cur
            },
            jac,
        );

        let cur = self.st.tp[i];
        let d = self.steps.scale(g0l1) * std_normal(&mut self.rng);
        let prop = TransitionParams {
            gamma0: cur.gamma0 + d,
            lambda1: cur.lambda1 - d,
            ..cur
        };
        self.try_transition(i, g0l1, &h, prop, 0.0);

        let cur = self.st.tp[i];
        let d = self.steps.scale(l23) * std_normal(&mut self.rng);
        let prop = TransitionParams {
            lambda2: cur.lambda2 + d,
            lambda3: cur.lambda3 - d,
            ..cur
        };
        self.try_transition(i, l23, &h, prop, 0.0);
    }

    fn try_transition(
        &mut self,
        i: usize,
        step: usize,
        h: &Hyper,
        prop: TransitionParams,
        log_jac: f64,
    ) {
        let anchors = self.ctx.slots[i].anchors;
        let lp_prop = if prop.is_valid() {
            h.transition_prior(&prop, anchors)
        } else {
            f64::NEG_INFINITY
        };
        if lp_prop == f64::NEG_INFINITY || log_jac == f64::NEG_INFINITY {
            self.steps.record(step, false);
            return;
        }
        let cur = self.st.tp[i];
        let ll_prop = self.slot_ll_with(i, Some(&prop));
        let lr = ll_prop + lp_prop - self.st.ll[i] - h.transition_prior(&cur, anchors) + log_jac;
        let ok = accept(&mut self.rng, lr);
        self.steps.record(step, ok);
        if ok {
            self.st.tp[i] = prop;
            self.st.ll[i] = ll_prop;
        }
    }

    fn update_delta(&mut self, i: usize) {
        let lpi = self.st.lpi[i];
        if self.ctx.slots[i].n == 0 {
            self.st.tp[i].delta = self.rng.random::<f64>() < inv_logit(lpi);
            return;
        }
        let tp = self.st.tp[i];
        let (l1, l0) = if tp.delta {
            (self.st.ll[i], self.slot_ll_with(i, None))
        } else {
            (self.slot_ll_with(i, Some(&tp)), self.st.ll[i])
        };
        let on = self.rng.random::<f64>() < inv_logit(lpi + l1 - l0);
        self.st.tp[i].delta = on;
        self.st.ll[i] = if on { l1 } else { l0 };
    }

    fn update_lpi(&mut self, i: usize) {
        let id = self.ss[i].lpi;
        let h = self.st.hyper;
        let delta = self.st.tp[i].delta;
        let target =
            |l: f64| normal_ln_pdf(l, h.mu_pi, h.sigma_pi) + bernoulli_logit_ln_pmf(delta, l);
        let cur = self.st.lpi[i];
        let prop = cur + self.steps.scale(id) * std_normal(&mut self.rng);
        let ok = accept(&mut self.rng, target(prop) - target(cur));
        self.steps.record(id, ok);
        if ok {
            self.st.lpi[i] = prop;
        }
    }

    /// Random walk on `log x` for a positive scalar; `target` is the log
    /// density on the natural scale.
    fn log_rw(&mut self, id: usize, cur: f64, target: impl Fn(f64) -> f64) -> f64 {
        let f = (self.steps.scale(id) * std_normal(&mut self.rng)).exp();
        let prop = cur * f;
        let t_prop = target(prop);
        let ok = t_prop > f64::NEG_INFINITY && accept(&mut self.rng, t_prop - target(cur) + f.ln());
        self.steps.record(id, ok);
        if ok {
            prop
        } else {
            cur
        }
    }

    fn id_rw(&mut self, id: usize, cur: f64, target: impl Fn(f64) -> f64) -> f64 {
        let prop = cur + self.steps.scale(id) * std_normal(&mut self.rng);
        let t_prop = target(prop);
        let ok = t_prop > f64::NEG_INFINITY && accept(&mut self.rng, t_prop - target(cur));
        self.steps.record(id, ok);
        if ok {
            prop
        } else {
            cur
        }
    }

    fn update_baseline_hyper(&mut self) {
        let ctx = self.ctx;
        for (r, members) in ctx.region_slots.iter().enumerate() {
            let id = self.gs.beta_region[r];
            if members.is_empty() {
                let (lo, hi) = bounds::BETA_REGION;
                self.st.beta_region[r] = self.rng.random_range(lo..hi);
                continue;
            }
            let lb = &self.st.lb;
            let sb = self.st.sigma_beta;
            let target = |b: f64| {
                let lnb = b.ln();
                uniform(b, bounds::BETA_REGION)
                    + members
                        .iter()
                        .map(|&i| normal_ln_pdf(lb[i], lnb, sb))
                        .sum::<f64>()
            };
            let cur = self.st.beta_region[r];
            let prop = cur + self.steps.scale(id) * std_normal(&mut self.rng);
            let tp = target(prop);
            let ok = tp > f64::NEG_INFINITY && accept(&mut self.rng, tp - target(cur));
            self.steps.record(id, ok);
            if ok {
                self.st.beta_region[r] = prop;
            }
        }

        let data_slots: Vec<usize> = (0..ctx.slots.len())
            .filter(|&i| ctx.slots[i].n > 0)
            .collect();
        let lb = std::mem::take(&mut self.st.lb);
        let ln_br: Vec<f64> = self.st.beta_region.iter().map(|b| b.ln()).collect();
        let sb = self.log_rw(self.gs.sigma_beta, self.st.sigma_beta, |s| {
            uniform_scale(s, bounds::SIGMA_BETA)
                + data_slots
                    .iter()
                    .map(|&i| normal_ln_pdf(lb[i], ln_br[ctx.slots[i].region], s))
                    .sum::<f64>()
        });
        self.st.sigma_beta = sb;
        self.st.lb = lb;

        let h = std::mem::take(&mut self.st.h);
        let sigma = self.st.sigma_eps;
        let paths_lp = |rho: f64, sigma: f64| {
            data_slots
                .iter()
                .map(|&i| ar_lp(&h[i], rho, sigma))
                .sum::<f64>()
        };
        // ρ moves on the logit scale.
        let id = self.gs.rho;
        let cur = self.st.rho;
        let lc = (cur / (1.0 - cur)).ln();
        let lp = lc + self.steps.scale(id) * std_normal(&mut self.rng);
        let prop = inv_logit(lp);
        let ok = if prop > 0.0 && prop <= RHO_CAP {
            let jac = |r: f64| (r * (1.0 - r)).ln();
            let lr = paths_lp(prop, sigma) + jac(prop) - paths_lp(cur, sigma) - jac(cur);
            accept(&mut self.rng, lr)
        } else {
            false
        };
        self.steps.record(id, ok);
        if ok {
            self.st.rho = prop;
        }
        let rho = self.st.rho;
        let s_new = self.log_rw(self.gs.sigma_eps, sigma, |s| {
            uniform_scale(s, bounds::SIGMA_EPS) + paths_lp(rho, s)
        });
        self.st.sigma_eps = s_new;
        self.st.h = h;
    }

    fn update_transition_hyper(&mut self) {
        let ctx = self.ctx;
        let tps = std::mem::take(&mut self.st.tp);
        let mut hy = self.st.hyper;

        hy.mu_xi = self.log_rw(self.gs.mu_xi, hy.mu_xi, |m| {
            uniform(m, bounds::MU_XI)
                + tps
                    .iter()
                    .map(|t| positive_term(t.xi, m, hy.sigma_xi))
                    .sum::<f64>()
        });
        hy.sigma_xi = self.log_rw(self.gs.sigma_xi, hy.sigma_xi, |s| {
            uniform_scale(s, bounds::SIGMA_XI)
                + tps
                    .iter()
                    .map(|t| positive_term(t.xi, hy.mu_xi, s))
                    .sum::<f64>()
        });
        let lambda = |t: &TransitionParams, k: usize| [t.lambda1, t.lambda2, t.lambda3][k];
        for k in 0..3 {
            let sl = hy.sigma_l[k];
            hy.mu_l[k] = self.log_rw(self.gs.mu_l[k], hy.mu_l[k], |m| {
                uniform(m, bounds::MU_LAMBDA)
                    + tps
                        .iter()
                        .map(|t| positive_term(lambda(t, k), m, sl))
                        .sum::<f64>()
            });
            let ml = hy.mu_l[k];
            hy.sigma_l[k] = self.log_rw(self.gs.sigma_l[k], sl, |s| {
                uniform(s, bounds::SIGMA_LAMBDA)
                    + tps
                        .iter()
                        .map(|t| positive_term(lambda(t, k), ml, s))
                        .sum::<f64>()
            });
        }
        hy.sigma_gamma = self.log_rw(self.gs.sigma_gamma, hy.sigma_gamma, |s| {
            uniform_scale(s, bounds::SIGMA_GAMMA)
                + tps
                    .iter()
                    .zip(&ctx.slots)
                    .map(|(t, sl)| gamma0_term(t.gamma0, sl.anchors, s))
                    .sum::<f64>()
        });
        let lpi = std::mem::take(&mut self.st.lpi);
        let sp = hy.sigma_pi;
        hy.mu_pi = self.id_rw(self.gs.mu_pi, hy.mu_pi, |m| {
            logistic_ln_pdf(m) + lpi.iter().map(|&l| normal_ln_pdf(l, m, sp)).sum::<f64>()
        });
        let mp = hy.mu_pi;
        hy.sigma_pi = self.log_rw(self.gs.sigma_pi, sp, |s| {
            uniform_scale(s, bounds::SIGMA_PI)
                + lpi.iter().map(|&l| normal_ln_pdf(l, mp, s)).sum::<f64>()
        });
        self.st.lpi = lpi;
        self.st.tp = tps;
        self.st.hyper = hy;
    }

    fn update_omega(&mut self) {
        let ctx = self.ctx;
        for s in SourceType::ALL
            .into_iter()
            .filter(|s| s.has_nonsampling_error())
        {
            let k = s.index();
            let id = self.gs.omega[k];
            let members = &ctx.src_slots[k];
            if members.is_empty() {
                let (lo, hi) = bounds::OMEGA;
                self.st.omega[k] = self.rng.random_range(lo..hi);
                continue;
            }
            let cur = self.st.omega[k];
            let f = (self.steps.scale(id) * std_normal(&mut self.rng)).exp();
            let prop = cur * f;
            if prop > bounds::OMEGA.1 {
                self.steps.record(id, false);
                continue;
            }
            let mut trial: Vec<(usize, Vec<f64>, f64)> = Vec::with_capacity(members.len());
            let mut lr = f.ln();
            for &i in members {
                let sl = &ctx.slots[i];
                let var: Vec<f64> = sl
                    .obs
                    .iter()
                    .zip(&self.st.var[i])
                    .map(|(o, &v)| {
                        if o.src == k {
                            (prop * prop + o.v2).max(ctx.floor)
                        } else {
                            v
                        }
                    })
                    .collect();
                let tp = self.active(i).then_some(&self.st.tp[i]);
                let ll = loglik(sl, &var, self.st.lb[i], &self.st.h[i], tp);
                lr += ll - self.st.ll[i];
                trial.push((i, var, ll));
            }
            let ok = accept(&mut self.rng, lr);
            self.steps.record(id, ok);
            if ok {
                self.st.omega[k] = prop;
                for (i, var, ll) in trial {
                    self.st.var[i] = var;
                    self.st.ll[i] = ll;
                }
            }
        }
    }

    /// Appends the current draw in the order of [`Context::param_names`].
    fn emit(&mut self, out: &mut Vec<f64>) {
        let ctx = self.ctx;
        let kind = ctx.kind;
        if kind == ModelKind::M1 {
            out.extend_from_slice(&self.st.beta_region);
            out.extend([self.st.sigma_beta, self.st.rho, self.st.sigma_eps]);
        }
        let (rho, sigma) = (self.st.rho, self.st.sigma_eps);
        for (i, s) in ctx.slots.iter().enumerate() {
            if kind.samples_beta() {
                let lb = if s.n > 0 {
                    self.st.lb[i]
                } else if kind == ModelKind::M1 {
                    self.st.beta_region[s.region].ln()
                        + self.st.sigma_beta * std_normal(&mut self.rng)
                } else {
                    self.st.lb[i]
                };
                out.push(lb.exp());
            }
            if s.n == 0 {
                let h = stationary_log_sd(rho, sigma) * std_normal(&mut self.rng);
                out.push(h.exp());
            } else {
                let back = (s.state_start - s.store_start) as usize;
                self.buf.clear();
                self.buf.resize(back, 0.0);
                let mut next = self.st.h[i][0];
                for j in (0..back).rev() {
                    next = rho * next + sigma * std_normal(&mut self.rng);
                    self.buf[j] = next;
                }
                out.extend(self.buf.iter().map(|h| h.exp()));
                out.extend(self.st.h[i].iter().map(|h| h.exp()));
            }
            if s.transition {
                let tp = self.st.tp[i];
                out.extend([tp.gamma0, tp.lambda1, tp.lambda2, tp.lambda3, tp.xi]);
                if kind.has_indicator() {
                    out.push(if tp.delta { 1.0 } else { 0.0 });
                    out.push(inv_logit(self.st.lpi[i]));
                }
            }
        }
        if kind.samples_hyper() {
            let h = self.st.hyper;
            out.extend([h.mu_xi, h.sigma_xi]);
            out.extend(h.mu_l);
            out.extend(h.sigma_l);
            out.extend([h.sigma_gamma, h.mu_pi, h.sigma_pi]);
        }
        out.extend(
            SourceType::ALL
                .into_iter()
                .filter(|s| s.has_nonsampling_error())
                .map(|s| self.st.omega[s.index()]),
        );
    }
}

fn init_state(ctx: &Context, rng: &mut ChaCha8Rng) -> State {
    let kind = ctx.kind;
    let mut omega = [0.0; 5];
    for s in SourceType::ALL
        .into_iter()
        .filter(|s| s.has_nonsampling_error())
    {
        omega[s.index()] = rng.random_range(0.02..0.08);
    }
    let var: Vec<Vec<f64>> = ctx
        .slots
        .iter()
        .map(|s| {
            s.obs
                .iter()
                .map(|o| (omega[o.src] * omega[o.src] + o.v2).max(ctx.floor))
                .collect()
        })
        .collect();
    let mean_log_y = |s: &Slot| s.log_y.iter().sum::<f64>() / s.log_y.len() as f64;

    let mut beta_region = vec![1.05; ctx.layout.regions.len()];
    let mut sigma_beta = 0.02;
    let (rho, sigma_eps) = if kind == ModelKind::M1 {
        for (r, members) in ctx.region_slots.iter().enumerate() {
            if !members.is_empty() {
                let m = members
                    .iter()
                    .map(|&i| mean_log_y(&ctx.slots[i]))
                    .sum::<f64>()
                    / members.len() as f64;
                beta_region[r] = (m.exp() * (0.003 * std_normal(rng)).exp()).clamp(1.005, 1.095);
            }
        }
        sigma_beta = rng.random_range(0.01..0.03);
        (rng.random_range(0.3..0.8), rng.random_range(0.005..0.02))
    } else {
        ctx.phi
    };
    let lb: Vec<f64> = ctx
        .slots
        .iter()
        .map(|s| match kind {
            ModelKind::M1 if s.n > 0 => mean_log_y(s) + 0.005 * std_normal(rng),
            ModelKind::M1 => beta_region[s.region].ln(),
            ModelKind::M2Joint => s.beta_prior.0.ln() + 0.002 * std_normal(rng),
            _ => s.lb_fixed,
        })
        .collect();
    let h: Vec<Vec<f64>> = ctx.slots.iter().map(|s| vec![0.0; s.n]).collect();
    let hyper = match ctx.zeta {
        Some(z) => z,
        None => Hyper {
            mu_xi: rng.random_range(0.03..0.1),
            sigma_xi: rng.random_range(0.02..0.08),
            mu_l: [(); 3].map(|_| rng.random_range(5.0..20.0)),
            sigma_l: [(); 3].map(|_| rng.random_range(2.0..8.0)),
            sigma_gamma: rng.random_range(3.0..8.0),
            mu_pi: 0.5 * std_normal(rng),
            sigma_pi: rng.random_range(0.5..1.5),
        },
    };
    let lpi = ctx
        .slots
        .iter()
        .map(|_| hyper.mu_pi + 0.3 * std_normal(rng))
        .collect();
    let tp: Vec<TransitionParams> = ctx
        .slots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if !s.transition {
                TransitionParams::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, false)
            } else if s.n == 0 {
                let (z, x) = s.anchors;
                TransitionParams::new(
                    sample_trunc_t3_lower(rng, x, hyper.sigma_gamma, z),
                    sample_truncnorm_lower(rng, hyper.mu_l[0], hyper.sigma_l[0], 0.0),
                    sample_truncnorm_lower(rng, hyper.mu_l[1], hyper.sigma_l[1], 0.0),
                    sample_truncnorm_lower(rng, hyper.mu_l[2], hyper.sigma_l[2], 0.0),
                    sample_truncnorm_lower(rng, hyper.mu_xi, hyper.sigma_xi, 0.0),
                    true,
                )
            } else {
                profile_transition(s, &var[i], lb[i], &h[i], rng)
            }
        })
        .collect();
    let mut st = State {
        beta_region,
        sigma_beta,
        rho,
        sigma_eps,
        lb,
        h,
        tp,
        lpi,
        hyper,
        omega,
        var,
        ll: Vec::new(),
    };
    st.ll = ctx
        .slots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let active = s.transition && (kind == ModelKind::M4 || st.tp[i].delta);
            loglik(
                s,
                &st.var[i],
                st.lb[i],
                &st.h[i],
                active.then_some(&st.tp[i]),
            )
        })
        .collect();
    st
}

/// Starting transition from a coarse likelihood search over start years and
/// phase lengths, with a jitter per chain.
fn profile_transition(
    s: &Slot,
    var: &[f64],
    lb: f64,
    h: &[f64],
    rng: &mut ChaCha8Rng,
) -> TransitionParams {
    let beta = lb.exp();
    let mut excess: Vec<f64> = s.log_y.iter().map(|y| y.exp() - beta).collect();
    excess.sort_by(f64::total_cmp);
    let xi0 = crate::quantile::quantile_sorted(&excess, 0.9).clamp(0.005, 0.3);
    let (z, _) = s.anchors;
    let hi = (s.end_year as f64).max(z);
    let mut best = (
        f64::NEG_INFINITY,
        TransitionParams::new(z, 10.0, 10.0, 15.0, xi0, true),
    );
    let mut g = z;
    while g <= hi {
        for (l1, l2) in [(5.0, 5.0), (5.0, 15.0), (15.0, 5.0), (15.0, 15.0)] {
            let tp = TransitionParams::new(g, l1, l2, 15.0, xi0, true);
            let ll = loglik(s, var, lb, h, Some(&tp));
            if ll > best.0 {
                best = (ll, tp);
            }
        }
        g += 1.0;
    }
    let b = best.1;
    let jit = |rng: &mut ChaCha8Rng| (0.1 * std_normal(rng)).exp();
    TransitionParams {
        gamma0: (b.gamma0 + std_normal(rng)).max(z + 1e-6),
        lambda1: b.lambda1 * jit(rng),
        lambda2: b.lambda2 * jit(rng),
        lambda3: b.lambda3 * jit(rng),
        xi: b.xi * jit(rng),
        delta: true,
    }
}
