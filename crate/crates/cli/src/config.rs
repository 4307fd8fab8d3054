use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sexratio_core::mcmc::McmcConfig;
use sexratio_core::model::ModelKind;
use sexratio_core::projection::{Scenario, DEFAULT_DRAWS};
use sexratio_core::synth::WorldSpec;
use sexratio_core::validation::{DEFAULT_PERMUTATIONS, REFERENCE_YEARS};
use sexratio_core::{births, GRID_END};

use crate::CliError;

/// Everything a run needs. Loaded from JSON; missing fields take defaults and
/// command-line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub models: Vec<ModelKind>,
    /// Sampler settings. The `seed` field is ignored: every fit derives its
    /// seed from the run seed.
    pub mcmc: McmcConfig,
    pub stack: StackMode,
    /// Posterior draws per country in projections.
    pub draws: usize,
    pub scenarios: Vec<Scenario>,
    pub births_window: Window,
    pub validation: ValidationConfig,
    pub synth: WorldSpec,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: InputPaths::default(),
            models: vec![ModelKind::M1, ModelKind::M2, ModelKind::M3, ModelKind::M4],
            mcmc: McmcConfig::default(),
            stack: StackMode::Auto,
            draws: DEFAULT_DRAWS,
            scenarios: Scenario::ALL.to_vec(),
            births_window: Window::default(),
            validation: ValidationConfig::default(),
            synth: WorldSpec::default(),
            out: PathBuf::from("run"),
            seed: 1,
            threads: None,
        }
    }
}

/// Input tables. A path left out defaults to the file of that name in the
/// `world/` directory of the run, where `synth` writes its bundle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub observations: Option<PathBuf>,
    pub countries: Option<PathBuf>,
    pub tfr: Option<PathBuf>,
    pub births: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StackMode {
    /// Stack only when chains disagree about a start year.
    Auto,
    Force,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub t1: i32,
    pub t2: i32,
}

impl Default for Window {
    fn default() -> Self {
        Window {
            t1: births::DEFAULT_WINDOW_START,
            t2: GRID_END,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Leave out every observation from a cutoff year onward.
    Recent,
    /// Leave out a random fraction of observations, repeatedly.
    Random,
    /// Predict at-risk data after 1970 from the data up to 1970.
    Predict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub mode: ValidationMode,
    /// M1 (risk-free database) or M2 (at-risk database).
    pub model: ModelKind,
    /// Defaults to 2005 for M1 and 2010 for M2.
    pub cutoff: Option<i32>,
    pub fraction: f64,
    pub reps: usize,
    pub permutations: usize,
    pub reference_years: Vec<i32>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            mode: ValidationMode::Recent,
            model: ModelKind::M1,
            cutoff: None,
            fraction: 0.2,
            reps: 30,
            permutations: DEFAULT_PERMUTATIONS,
            reference_years: REFERENCE_YEARS.to_vec(),
        }
    }
}

impl ValidationConfig {
    pub fn effective_cutoff(&self) -> i32 {
        self.cutoff.unwrap_or(match self.model {
            ModelKind::M2 => 2010,
            _ => 2005,
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // Relative input paths are taken relative to the config file.
        if let Some(dir) = path.parent() {
            for p in cfg.inputs.slots_mut().into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.mcmc
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.draws == 0 {
            return bad("draws must be positive".into());
        }
        if self.scenarios.is_empty() {
            return bad("no scenarios selected".into());
        }
        let w = self.births_window;
        if w.t1 > w.t2 {
            return bad(format!("births window {}..{} is empty", w.t1, w.t2));
        }
        let v = &self.validation;
        if !matches!(v.model, ModelKind::M1 | ModelKind::M2) {
            return bad(format!("validation supports M1 and M2, not {}", v.model));
        }
        if v.reps == 0 || v.permutations == 0 {
            return bad("validation repetitions and permutation sets must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    pub fn world_dir(&self) -> PathBuf {
        self.out.join("world")
    }

    pub fn observations_path(&self) -> PathBuf {
        self.input(&self.inputs.observations, "observations.csv")
    }

    pub fn countries_path(&self) -> PathBuf {
        self.input(&self.inputs.countries, "countries.csv")
    }

    pub fn tfr_path(&self) -> PathBuf {
        self.input(&self.inputs.tfr, "tfr.csv")
    }

    pub fn births_path(&self) -> PathBuf {
        self.input(&self.inputs.births, "births.csv")
    }

    fn input(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.world_dir().join(name))
    }

    /// Resolved paths of the four input tables, in a fixed order.
    pub fn input_paths(&self) -> [(&'static str, PathBuf); 4] {
        [
            ("observations", self.observations_path()),
            ("countries", self.countries_path()),
            ("tfr", self.tfr_path()),
            ("births", self.births_path()),
        ]
    }
}

impl InputPaths {
    fn slots_mut(&mut self) -> [&mut Option<PathBuf>; 4] {
        [
            &mut self.observations,
            &mut self.countries,
            &mut self.tfr,
            &mut self.births,
        ]
    }
}

/// Parses a comma-separated model list such as `m1,m2`.
pub fn parse_models(raw: &str) -> Result<Vec<ModelKind>, CliError> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<ModelKind>().map_err(CliError::Config))
        .collect()
}

pub fn parse_scenarios(raw: &str) -> Result<Vec<Scenario>, CliError> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .to_ascii_uppercase()
                .parse::<Scenario>()
                .map_err(|e| CliError::Config(e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert_eq!(serde_json::from_str::<RunConfig>("{}").unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 3}"#).is_err());
    }

    #[test]
    fn model_and_scenario_lists() {
        assert_eq!(
            parse_models("m2, M1").unwrap(),
            vec![ModelKind::M2, ModelKind::M1]
        );
        assert!(parse_models("m9").is_err());
        assert_eq!(
            parse_scenarios("s3,S1").unwrap(),
            vec![Scenario::S3, Scenario::S1]
        );
    }

    #[test]
    fn validation_cutoff_depends_on_model() {
        let mut v = ValidationConfig::default();
        assert_eq!(v.effective_cutoff(), 2005);
        v.model = ModelKind::M2;
        assert_eq!(v.effective_cutoff(), 2010);
        v.cutoff = Some(2000);
        assert_eq!(v.effective_cutoff(), 2000);
    }

    #[test]
    fn input_paths_default_to_the_world_bundle() {
        let cfg = RunConfig {
            out: PathBuf::from("/tmp/r"),
            ..Default::default()
        };
        assert_eq!(cfg.tfr_path(), PathBuf::from("/tmp/r/world/tfr.csv"));
    }
}
