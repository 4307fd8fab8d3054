use std::fs;

use log::info;
use rayon::prelude::*;
use sexratio_core::data::{build_at_risk_db, build_country_db, build_risk_free_db};
use sexratio_core::mcmc::{fixed_inputs_from_m1, zeta_hat_from_m2};
use sexratio_core::model::{FixedInputs, ModelKind, ModelSpec};
use sexratio_core::projection::{classify, compute_psi};

use super::{derive_seed, load_inputs, run_fit, Inputs};
use crate::store::{
    classification_path, fit_dir, point_estimates_path, read_json, save_fit, write_json,
    ClassificationFile, PointEstimates,
};
use crate::{CliError, Provenance, RunConfig};

/// Runs the requested fits in pipeline order: M1, then M2, then the
/// per-country M3 and M4 fits, whatever order they were listed in. Each stage
/// reads the point estimates its predecessor persisted, so stages can run in
/// separate invocations.
pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let prov = Provenance::new(cfg, true)?;
    let inputs = load_inputs(cfg)?;
    let mut models = cfg.models.clone();
    models.sort();
    models.dedup();
    if models.is_empty() {
        return Err(CliError::Config("no models selected".into()));
    }
    for kind in models {
        match kind {
            ModelKind::M1 => fit_m1(cfg, &prov, &inputs)?,
            ModelKind::M2 => fit_m2(cfg, &prov, &inputs)?,
            ModelKind::M3 | ModelKind::M4 => fit_per_country(cfg, &prov, &inputs, kind)?,
            ModelKind::M2Joint => fit_joint(cfg, &prov, &inputs)?,
        }
    }
    Ok(())
}

fn seed_for(cfg: &RunConfig, kind: ModelKind, index: u64) -> u64 {
    derive_seed(cfg.seed, 100 + kind as u64, index)
}

fn fit_m1(cfg: &RunConfig, prov: &Provenance, inputs: &Inputs) -> Result<(), CliError> {
    let data = build_risk_free_db(&inputs.obs, &inputs.registry);
    let spec = ModelSpec::m1();
    let out = run_fit(
        cfg,
        prov,
        &spec,
        &data,
        inputs,
        seed_for(cfg, ModelKind::M1, 0),
    )?;
    save_fit(
        &fit_dir(&cfg.out, ModelKind::M1, None),
        &out.chains,
        out.stacked.as_ref(),
        &out.meta,
        prov,
    )?;
    let fixed =
        fixed_inputs_from_m1(&out.draws().draws, &inputs.registry).map_err(CliError::core)?;
    write_json(
        &point_estimates_path(&cfg.out),
        &PointEstimates {
            provenance: prov.clone(),
            fixed,
        },
    )
}

/// Point estimates from M1, without any from an earlier M2 run.
fn m1_point_estimates(cfg: &RunConfig) -> Result<FixedInputs, CliError> {
    let pe: PointEstimates = read_json(&point_estimates_path(&cfg.out), "fit --models m1")?;
    Ok(FixedInputs {
        zeta_hat: None,
        ..pe.fixed
    })
}

fn fit_m2(cfg: &RunConfig, prov: &Provenance, inputs: &Inputs) -> Result<(), CliError> {
    let fixed = m1_point_estimates(cfg)?;
    let data = build_at_risk_db(&inputs.obs, &inputs.registry);
    let spec = ModelSpec::new(ModelKind::M2, fixed.clone());
    let out = run_fit(
        cfg,
        prov,
        &spec,
        &data,
        inputs,
        seed_for(cfg, ModelKind::M2, 0),
    )?;
    save_fit(
        &fit_dir(&cfg.out, ModelKind::M2, None),
        &out.chains,
        out.stacked.as_ref(),
        &out.meta,
        prov,
    )?;
    let psi = compute_psi(&out.used_chains());
    let classification = classify(&inputs.registry, &psi).map_err(CliError::core)?;
    info!(
        "{} inflation and {} future-inflation countries",
        classification.inflation.len(),
        classification.future_inflation.len()
    );
    write_json(
        &classification_path(&cfg.out),
        &ClassificationFile {
            provenance: prov.clone(),
            classification,
        },
    )?;
    let zeta = zeta_hat_from_m2(&out.draws().draws).map_err(CliError::core)?;
    write_json(
        &point_estimates_path(&cfg.out),
        &PointEstimates {
            provenance: prov.clone(),
            fixed: FixedInputs {
                zeta_hat: Some(zeta),
                ..fixed
            },
        },
    )
}

fn fit_per_country(
    cfg: &RunConfig,
    prov: &Provenance,
    inputs: &Inputs,
    kind: ModelKind,
) -> Result<(), CliError> {
    let pe: PointEstimates = read_json(&point_estimates_path(&cfg.out), "fit --models m1")?;
    let class: ClassificationFile = read_json(&classification_path(&cfg.out), "fit --models m2")?;
    if kind == ModelKind::M4 && pe.fixed.zeta_hat.is_none() {
        return Err(CliError::MissingPrerequisite(
            "transition hyperparameter estimates; run `fit --models m2` first".into(),
        ));
    }
    let root = fit_dir(&cfg.out, kind, None);
    if root.exists() {
        fs::remove_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
    }
    let codes: Vec<&String> = class.classification.future_inflation.iter().collect();
    if codes.is_empty() {
        info!("no future-inflation countries; nothing to fit for {kind}");
        return Ok(());
    }
    let fits = codes
        .par_iter()
        .enumerate()
        .map(|(i, code)| {
            let data =
                build_country_db(&inputs.obs, &inputs.registry, code).map_err(CliError::core)?;
            let spec = ModelSpec::new(kind, pe.fixed.clone()).for_country(code);
            run_fit(
                cfg,
                prov,
                &spec,
                &data,
                inputs,
                seed_for(cfg, kind, i as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (code, out) in codes.into_iter().zip(&fits) {
        save_fit(
            &fit_dir(&cfg.out, kind, Some(code)),
            &out.chains,
            out.stacked.as_ref(),
            &out.meta,
            prov,
        )?;
    }
    Ok(())
}

/// M2 with country baselines sampled instead of fixed, on the same data.
fn fit_joint(cfg: &RunConfig, prov: &Provenance, inputs: &Inputs) -> Result<(), CliError> {
    let spec = ModelSpec::new(ModelKind::M2Joint, m1_point_estimates(cfg)?);
    let data = build_at_risk_db(&inputs.obs, &inputs.registry);
    let seed = seed_for(cfg, ModelKind::M2Joint, 0);
    let out = run_fit(cfg, prov, &spec, &data, inputs, seed)?;
    save_fit(
        &fit_dir(&cfg.out, ModelKind::M2Joint, None),
        &out.chains,
        out.stacked.as_ref(),
        &out.meta,
        prov,
    )
}
