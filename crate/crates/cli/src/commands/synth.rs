use log::info;
use sexratio_core::synth::generate;

use crate::store::write_json;
use crate::{CliError, Provenance, RunConfig};

/// Draws a synthetic world from `cfg.synth` and writes its input bundle,
/// with the true parameter values, to `<out>/world`.
pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let prov = Provenance::new(cfg, false)?;
    let world = generate(&cfg.synth).map_err(CliError::core)?;
    let dir = cfg.world_dir();
    world
        .write_bundle(&dir, Some(&prov.header()))
        .map_err(|e| CliError::io(&dir, e))?;
    write_json(&dir.join("spec.json"), &cfg.synth)?;
    info!(
        "wrote {} observations for {} countries to {}",
        world.observations.len(),
        world.registry.countries().len(),
        dir.display()
    );
    Ok(())
}
