mod births;
mod diagnose;
mod fit;
mod project;
mod synth;
mod validate;

use std::collections::BTreeMap;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sexratio_core::data::{
    compute_tfr_anchors, CountryRegistry, IngestError, ObservationSet, TfrAnchors, TfrTable,
};
use sexratio_core::mcmc::{
    fit as run_sampler, psrf_table, stack_chains, stacking_triggered, DrawSet, FitInputs,
    FitMetadata, McmcConfig, PosteriorChains, StackingInfo,
};
use sexratio_core::model::ModelSpec;
use sexratio_core::projection::FitDraws;

pub use births::births;
pub use diagnose::diagnose;
pub use fit::fit;
pub use project::project;
pub use synth::synth;
pub use validate::validate;

use crate::store::is_path_parameter;
use crate::{CliError, Provenance, RunConfig, StackMode};

/// Separate seed families for the random steps of a run.
mod tag {
    pub const FIT: u64 = 1;
    pub const STACK: u64 = 2;
    pub const ALIGN: u64 = 3;
    pub const PROJECT: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const PREDICT: u64 = 6;
    pub const PERMUTE: u64 = 7;
    pub const SHIFT: u64 = 8;
}

/// Mixes a run seed with a step tag and an index (SplitMix64 finalizer), so
/// that unrelated steps never share a random stream.
pub(crate) fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z =
        seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) struct Inputs {
    pub obs: ObservationSet,
    pub registry: CountryRegistry,
    pub tfr: TfrTable,
    pub anchors: BTreeMap<String, TfrAnchors>,
}

pub(crate) fn load_inputs(cfg: &RunConfig) -> Result<Inputs, CliError> {
    let registry = CountryRegistry::load(&cfg.countries_path()).map_err(input_error)?;
    let obs =
        ObservationSet::load(&cfg.observations_path(), Some(&registry)).map_err(input_error)?;
    let tfr = TfrTable::load(&cfg.tfr_path()).map_err(input_error)?;
    let mut anchors = BTreeMap::new();
    for code in registry.at_risk_codes() {
        match compute_tfr_anchors(&tfr, &code) {
            Ok(a) => {
                anchors.insert(code, a);
            }
            Err(IngestError::MissingTfr(_)) => {
                warn!("no fertility series for at-risk country {code}")
            }
            Err(e) => return Err(CliError::core(e)),
        }
    }
    info!(
        "{} observations for {} countries",
        obs.len(),
        registry.countries().len()
    );
    Ok(Inputs {
        obs,
        registry,
        tfr,
        anchors,
    })
}

/// Missing input tables are a missing prerequisite; the world bundle is the
/// usual source.
fn input_error(e: IngestError) -> CliError {
    match e {
        IngestError::Io {
            ref path,
            ref source,
        } if source.kind() == std::io::ErrorKind::NotFound => CliError::MissingPrerequisite(
            format!("input {path} not found; run `synth` or set its path in the config"),
        ),
        e => CliError::core(e),
    }
}

/// Output of one sampler run, ready to be saved.
pub(crate) struct FitOutcome {
    pub chains: PosteriorChains,
    pub stacked: Option<DrawSet>,
    pub meta: FitMetadata,
}

impl FitOutcome {
    /// The draws later stages use.
    pub fn draws(&self) -> FitDraws {
        match &self.stacked {
            Some(d) => FitDraws {
                spec: self.chains.spec.clone(),
                layout: self.chains.layout.clone(),
                draws: d.clone(),
            },
            None => FitDraws::from_chains(&self.chains),
        }
    }

    /// The used draws as a single-chain posterior.
    pub fn used_chains(&self) -> PosteriorChains {
        match &self.stacked {
            Some(d) => PosteriorChains::from_parts(&self.meta, vec![d.clone()]),
            None => self.chains.clone(),
        }
    }
}

/// Runs the sampler and, when asked for or triggered, stacks the chains.
pub(crate) fn run_fit(
    cfg: &RunConfig,
    prov: &Provenance,
    spec: &ModelSpec,
    data: &ObservationSet,
    inputs: &Inputs,
    seed: u64,
) -> Result<FitOutcome, CliError> {
    let mcmc = McmcConfig {
        seed: derive_seed(seed, tag::FIT, 0),
        ..cfg.mcmc.clone()
    };
    let label = match &spec.country {
        Some(c) => format!("{} ({c})", spec.kind),
        None => spec.kind.to_string(),
    };
    info!("fitting {label} on {} observations", data.len());
    let fit_inputs = FitInputs {
        data,
        registry: &inputs.registry,
        anchors: &inputs.anchors,
    };
    let chains = run_sampler(spec, &fit_inputs, &mcmc).map_err(CliError::core)?;
    let psrf = psrf_table(&chains, |n| !is_path_parameter(n));
    let high = psrf.values().flatten().filter(|&&r| r > 1.1).count();
    if high > 0 {
        warn!("{label}: {high} parameters with PSRF above 1.1");
    }
    let triggered = stacking_triggered(&chains);
    let stack = match cfg.stack {
        StackMode::Force => true,
        StackMode::Auto => triggered,
        StackMode::Off => false,
    };
    let mut meta = chains.metadata();
    meta.psrf = psrf;
    meta.version = prov.version.clone();
    meta.config_hash = prov.config_hash.clone();
    let mut stacked = None;
    if stack && chains.n_chains() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag::STACK, 0));
        let n = chains.n_chains() * chains.draws_per_chain();
        let s = stack_chains(&chains, data, n, &mut rng).map_err(CliError::core)?;
        info!("{label}: stacked chains with weights {:?}", s.weights);
        meta.stacking = Some(StackingInfo {
            weights: s.weights,
            triggered,
            unstable_loo_points: s.unstable_loo_points,
        });
        stacked = Some(s.draws);
    } else if triggered {
        warn!("{label}: chains disagree on a start year but stacking is off");
    }
    Ok(FitOutcome {
        chains,
        stacked,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_tag_and_index() {
        let a = derive_seed(1, tag::FIT, 0);
        assert_eq!(a, derive_seed(1, tag::FIT, 0));
        assert_ne!(a, derive_seed(1, tag::STACK, 0));
        assert_ne!(a, derive_seed(1, tag::FIT, 1));
        assert_ne!(a, derive_seed(2, tag::FIT, 0));
    }
}
