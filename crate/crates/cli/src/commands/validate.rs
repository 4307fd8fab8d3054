use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sexratio_core::data::{build_at_risk_db, build_risk_free_db, ObservationSet};
use sexratio_core::model::{ModelKind, ModelSpec};
use sexratio_core::projection::{align_draws, FitDraws, ScenarioFits};
use sexratio_core::validation::{
    aggregate_reports, estimate_shift_metrics, leftout_metrics, posterior_predictive,
    predict_from_1970, split, write_estimates_csv, write_leftout_csv, SplitMode, SplitSpec,
    ValidationReport,
};

use super::{derive_seed, load_inputs, run_fit, tag, Inputs};
use crate::store::{
    fit_dir, load_fit, point_estimates_path, read_json, write_csv, write_json, PointEstimates,
};
use crate::{CliError, Provenance, RunConfig, ValidationMode};

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub mode: ValidationMode,
    pub model: ModelKind,
    pub reports: Vec<ValidationReport>,
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let prov = Provenance::new(cfg, true)?;
    let inputs = load_inputs(cfg)?;
    let v = &cfg.validation;
    let (name, model, reports) = match v.mode {
        ValidationMode::Recent => {
            let ex = Exercise::new(cfg, &inputs)?;
            let cutoff = v.effective_cutoff();
            let spec = SplitSpec {
                mode: SplitMode::RecentAfterYear { cutoff },
                repetition: 0,
                seed: 0,
            };
            let label = format!("recent_{cutoff}");
            let r = ex.run(cfg, &prov, &inputs, &spec, &label, 0)?;
            (format!("recent_{}", model_dir(v.model)), v.model, vec![r])
        }
        ValidationMode::Random => {
            let ex = Exercise::new(cfg, &inputs)?;
            let dir = cfg
                .out
                .join("validate")
                .join(format!("random_{}", model_dir(v.model)));
            let reps_dir = dir.join("reps");
            if reps_dir.exists() {
                fs::remove_dir_all(&reps_dir).map_err(|e| CliError::io(&reps_dir, e))?;
            }
            let mut reps = Vec::with_capacity(v.reps);
            for i in 0..v.reps {
                let spec = SplitSpec {
                    mode: SplitMode::RandomFraction {
                        fraction: v.fraction,
                    },
                    repetition: i as u64,
                    seed: derive_seed(cfg.seed, tag::SPLIT, 0),
                };
                let label = format!("rep_{:02}", i + 1);
                let r = ex.run(cfg, &prov, &inputs, &spec, &label, i as u64 + 1)?;
                write_json(
                    &reps_dir.join(format!("{label}.json")),
                    &ReportFile {
                        provenance: prov.clone(),
                        mode: v.mode,
                        model: v.model,
                        reports: vec![r.clone()],
                    },
                )?;
                reps.push(r);
            }
            let agg = aggregate_reports("aggregate", &reps).expect("at least one repetition");
            reps.insert(0, agg);
            (format!("random_{}", model_dir(v.model)), v.model, reps)
        }
        ValidationMode::Predict => {
            let r = prediction(cfg, &inputs)?;
            ("predict".to_string(), ModelKind::M2, vec![r])
        }
    };
    let dir = cfg.out.join("validate").join(name);
    write_outputs(&dir, &prov, v.mode, model, &reports)
}

fn model_dir(kind: ModelKind) -> String {
    kind.name().to_ascii_lowercase()
}

fn write_outputs(
    dir: &Path,
    prov: &Provenance,
    mode: ValidationMode,
    model: ModelKind,
    reports: &[ValidationReport],
) -> Result<(), CliError> {
    write_json(
        &dir.join("report.json"),
        &ReportFile {
            provenance: prov.clone(),
            mode,
            model,
            reports: reports.to_vec(),
        },
    )?;
    write_csv(&dir.join("leftout.csv"), prov, |w| {
        write_leftout_csv(reports, w)
    })?;
    write_csv(&dir.join("estimates.csv"), prov, |w| {
        write_estimates_csv(reports, w)
    })?;
    info!("wrote validation reports to {}", dir.display());
    Ok(())
}

/// The database, model and full-data fit of a left-out exercise.
struct Exercise {
    data: ObservationSet,
    spec: ModelSpec,
    full: FitDraws,
}

impl Exercise {
    fn new(cfg: &RunConfig, inputs: &Inputs) -> Result<Self, CliError> {
        let model = cfg.validation.model;
        let (data, spec) = match model {
            ModelKind::M1 => (
                build_risk_free_db(&inputs.obs, &inputs.registry),
                ModelSpec::m1(),
            ),
            _ => {
                let pe: PointEstimates =
                    read_json(&point_estimates_path(&cfg.out), "fit --models m1")?;
                let mut fixed = pe.fixed;
                fixed.zeta_hat = None;
                (
                    build_at_risk_db(&inputs.obs, &inputs.registry),
                    ModelSpec::new(ModelKind::M2, fixed),
                )
            }
        };
        let stage = format!("fit --models {}", model_dir(model));
        let full = load_fit(&fit_dir(&cfg.out, model, None), &stage)?.draws;
        Ok(Exercise { data, spec, full })
    }

    /// Refits on the training part of one split and scores it.
    fn run(
        &self,
        cfg: &RunConfig,
        prov: &Provenance,
        inputs: &Inputs,
        split_spec: &SplitSpec,
        label: &str,
        index: u64,
    ) -> Result<ValidationReport, CliError> {
        let v = &cfg.validation;
        let s = split(&self.data, split_spec).map_err(CliError::core)?;
        info!(
            "{label}: {} training and {} test observations",
            s.train.len(),
            s.test.len()
        );
        let fit_seed = derive_seed(cfg.seed, tag::SPLIT, 1000 + index);
        let train = run_fit(cfg, prov, &self.spec, &s.train, inputs, fit_seed)?.draws();
        let rows =
            posterior_predictive(&train, &s.test, derive_seed(cfg.seed, tag::PREDICT, index))
                .map_err(CliError::core)?;
        let leftout = leftout_metrics(
            &rows,
            v.permutations,
            derive_seed(cfg.seed, tag::PERMUTE, index),
        )
        .map_err(CliError::core)?;
        let estimates = estimate_shift_metrics(
            &self.full,
            &train,
            &v.reference_years,
            derive_seed(cfg.seed, tag::SHIFT, index),
        )
        .map_err(CliError::core)?;
        Ok(ValidationReport {
            label: label.to_string(),
            n_train_countries: s.train.countries().len(),
            n_full_countries: self.data.countries().len(),
            leftout: Some(leftout),
            estimates,
        })
    }
}

/// Scores at-risk data after 1970 as predicted from M1 and M2.
fn prediction(cfg: &RunConfig, inputs: &Inputs) -> Result<ValidationReport, CliError> {
    let m1 = load_fit(&fit_dir(&cfg.out, ModelKind::M1, None), "fit --models m1")?;
    let m2 = load_fit(&fit_dir(&cfg.out, ModelKind::M2, None), "fit --models m2")?;
    let mut fits = ScenarioFits {
        m1: m1.draws,
        m2: Some(m2.draws),
        m3: BTreeMap::new(),
        m4: BTreeMap::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tag::ALIGN, 1));
    align_draws(&mut fits, cfg.draws, &mut rng);
    let at_risk = build_at_risk_db(&inputs.obs, &inputs.registry);
    predict_from_1970(
        &fits.m1,
        fits.m2.as_ref().expect("set above"),
        &at_risk,
        &inputs.anchors,
        cfg.validation.permutations,
        derive_seed(cfg.seed, tag::PREDICT, 0),
    )
    .map_err(CliError::core)
}
