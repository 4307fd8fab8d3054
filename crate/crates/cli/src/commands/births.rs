use log::{info, warn};
use sexratio_core::births::{amfb_cmfb, summarize, write_births_csv};
use sexratio_core::data::BirthsTable;

use super::project::{prepare, ProjectManifest};
use crate::store::{project_manifest_path, read_json, write_csv};
use crate::{CliError, Provenance, RunConfig, Window};

/// Missing female births per scenario. Trajectories are rebuilt from the
/// stored fits with the projection seed, so they are the ones `project`
/// summarized.
pub fn births(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let manifest: ProjectManifest = read_json(&project_manifest_path(&cfg.out), "project")?;
    let prov = Provenance::new(cfg, true)?;
    if manifest.draws != cfg.draws {
        warn!(
            "projection used {} draws, this run uses {}",
            manifest.draws, cfg.draws
        );
    }
    let path = cfg.births_path();
    let table = BirthsTable::load(&path).map_err(|e| match e {
        sexratio_core::data::IngestError::Io { source, .. }
            if source.kind() == std::io::ErrorKind::NotFound =>
        {
            CliError::MissingPrerequisite(format!("births table {} not found", path.display()))
        }
        e => CliError::core(e),
    })?;
    let p = prepare(cfg)?;
    let Window { t1, t2 } = cfg.births_window;
    let dir = cfg.out.join("births");
    for &scenario in &cfg.scenarios {
        let mut rows = Vec::new();
        p.for_each_batch(scenario, |t| {
            let acc = amfb_cmfb(t, &table, t1, t2).map_err(CliError::core)?;
            rows.extend(summarize(&acc));
            Ok(())
        })?;
        let name = format!("births_{scenario}.csv");
        write_csv(&dir.join(&name), &prov, |w| {
            write_births_csv(&rows, &table.unit, w)
        })?;
        info!("wrote {name}");
    }
    Ok(())
}
