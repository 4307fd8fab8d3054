use std::collections::BTreeMap;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sexratio_core::model::ModelKind;
use sexratio_core::projection::{
    align_draws, assemble_countries, classify, inject_tfr_start_uncertainty,
    last_observation_years, summarize, write_scenario_csv, CountryClassification, Scenario,
    ScenarioFits, ScenarioTrajectories,
};

use super::{derive_seed, load_inputs, tag, Inputs};
use crate::store::{
    classification_path, fit_dir, load_fit, project_manifest_path, read_json, write_csv,
    write_json, ClassificationFile,
};
use crate::{CliError, Provenance, RunConfig};

/// Record of a projection run; later commands check for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectManifest {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub draws: usize,
    pub scenarios: Vec<Scenario>,
    pub countries: BTreeMap<String, usize>,
    pub files: Vec<String>,
}

/// Fits and classification aligned for scenario assembly.
pub(super) struct Projection {
    pub inputs: Inputs,
    pub class: CountryClassification,
    pub fits: ScenarioFits,
    pub last_obs: BTreeMap<String, i32>,
    pub seed: u64,
}

pub(super) fn prepare(cfg: &RunConfig) -> Result<Projection, CliError> {
    let inputs = load_inputs(cfg)?;
    let m1 = load_fit(&fit_dir(&cfg.out, ModelKind::M1, None), "fit --models m1")?;
    let class = if inputs.registry.at_risk_codes().is_empty() {
        classify(&inputs.registry, &BTreeMap::new()).map_err(CliError::core)?
    } else {
        let file: ClassificationFile =
            read_json(&classification_path(&cfg.out), "fit --models m2")?;
        file.classification
    };
    let m2 = if class.inflation.is_empty() && class.future_inflation.is_empty() {
        None
    } else {
        Some(load_fit(&fit_dir(&cfg.out, ModelKind::M2, None), "fit --models m2")?.draws)
    };
    let mut m3 = BTreeMap::new();
    let mut m4 = BTreeMap::new();
    for code in &class.future_inflation {
        for (kind, map) in [(ModelKind::M3, &mut m3), (ModelKind::M4, &mut m4)] {
            let stage = format!("fit --models {}", kind.name().to_ascii_lowercase());
            let f = load_fit(&fit_dir(&cfg.out, kind, Some(code)), &stage)?;
            map.insert(code.clone(), f.draws);
        }
    }
    let mut fits = ScenarioFits {
        m1: m1.draws,
        m2,
        m3,
        m4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tag::ALIGN, 0));
    align_draws(&mut fits, cfg.draws, &mut rng);
    let last_obs = last_observation_years(&inputs.obs);
    Ok(Projection {
        inputs,
        class,
        fits,
        last_obs,
        seed: derive_seed(cfg.seed, tag::PROJECT, 0),
    })
}

impl Projection {
    /// Assembles `scenario` a few countries at a time, handing each batch to
    /// `f` in country-code order.
    pub fn for_each_batch(
        &self,
        scenario: Scenario,
        mut f: impl FnMut(&ScenarioTrajectories) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let n = self.class.countries().count();
        let batch = rayon::current_num_threads().max(1);
        for start in (0..n).step_by(batch) {
            let mut t = assemble_countries(
                scenario,
                &self.class,
                &self.fits,
                self.seed,
                start..start + batch,
            )
            .map_err(CliError::core)?;
            inject_tfr_start_uncertainty(
                &mut t,
                &self.inputs.tfr,
                &self.inputs.anchors,
                &self.last_obs,
                self.seed,
            );
            f(&t)?;
        }
        Ok(())
    }
}

pub fn project(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let prov = Provenance::new(cfg, true)?;
    let p = prepare(cfg)?;
    let dir = cfg.out.join("project");
    let mut files = Vec::new();
    for &scenario in &cfg.scenarios {
        let mut rows = Vec::new();
        p.for_each_batch(scenario, |t| {
            rows.extend(summarize(t));
            Ok(())
        })?;
        let name = format!("scenario_{scenario}.csv");
        write_csv(&dir.join(&name), &prov, |w| write_scenario_csv(&rows, w))?;
        info!("wrote {name}");
        files.push(name);
    }
    let countries = [
        ("base", p.class.base.len()),
        ("inflation", p.class.inflation.len()),
        ("future_inflation", p.class.future_inflation.len()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    write_json(
        &project_manifest_path(&cfg.out),
        &ProjectManifest {
            provenance: prov,
            draws: cfg.draws,
            scenarios: cfg.scenarios.clone(),
            countries,
            files,
        },
    )
}
