use std::io::Write;

use log::{info, warn};
use sexratio_core::mcmc::{gamma0_spread, psrf_table};
use sexratio_core::model::ModelKind;

use crate::store::{fit_dir, load_fit, per_country_fits, write_csv, write_psrf, METADATA_FILE};
use crate::{CliError, Provenance, RunConfig};

/// Convergence tables for every stored fit: the PSRF of each parameter,
/// fluctuation terms included, and one summary line per fit.
pub fn diagnose(cfg: &RunConfig) -> Result<(), CliError> {
    let prov = Provenance::new(cfg, true)?;
    let mut fits = Vec::new();
    for kind in [ModelKind::M1, ModelKind::M2, ModelKind::M2Joint] {
        if fit_dir(&cfg.out, kind, None).join(METADATA_FILE).exists() {
            fits.push((
                kind.name().to_ascii_lowercase(),
                fit_dir(&cfg.out, kind, None),
            ));
        }
    }
    for kind in [ModelKind::M3, ModelKind::M4] {
        for code in per_country_fits(&cfg.out, kind)? {
            let label = format!("{}_{code}", kind.name().to_ascii_lowercase());
            fits.push((label, fit_dir(&cfg.out, kind, Some(&code))));
        }
    }
    if fits.is_empty() {
        return Err(CliError::MissingPrerequisite(format!(
            "no fits under {}; run `fit` first",
            cfg.out.join("fit").display()
        )));
    }
    let dir = cfg.out.join("diagnose");
    let mut summary = Vec::new();
    for (label, path) in &fits {
        let stored = load_fit(path, "fit")?;
        let psrf = psrf_table(&stored.chains, |_| true);
        write_csv(&dir.join(format!("psrf_{label}.csv")), &prov, |w| {
            write_psrf(&psrf, w)
        })?;
        let defined: Vec<f64> = psrf.values().flatten().copied().collect();
        let max = defined.iter().copied().fold(f64::NAN, f64::max);
        let high = defined.iter().filter(|&&r| r > 1.1).count();
        if high > 0 {
            warn!("{label}: {high} parameters with PSRF above 1.1");
        }
        summary.push(format!(
            "{label},{},{},{},{high},{},{}",
            psrf.len(),
            psrf.len() - defined.len(),
            if max.is_nan() {
                "NA".to_string()
            } else {
                max.to_string()
            },
            gamma0_spread(&stored.chains),
            stored.meta.stacking.is_some()
        ));
    }
    write_csv(&dir.join("summary.csv"), &prov, |w| {
        writeln!(
            w,
            "fit,parameters,undefined,max_psrf,above_1_1,gamma0_spread,stacked"
        )?;
        for line in &summary {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    info!("diagnosed {} fits", fits.len());
    Ok(())
}
