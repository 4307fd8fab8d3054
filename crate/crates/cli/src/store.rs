//! Reading and writing the artifacts of a run directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sexratio_core::mcmc::{
    point_estimates, read_chains_csv, write_chains_csv, DrawSet, FitMetadata, PosteriorChains,
};
use sexratio_core::model::{FixedInputs, ModelKind};
use sexratio_core::projection::{CountryClassification, FitDraws};

use crate::{CliError, Provenance};

pub const CHAINS_FILE: &str = "chains.csv";
pub const STACKED_FILE: &str = "stacked.csv";
pub const METADATA_FILE: &str = "metadata.json";
pub const PSRF_FILE: &str = "psrf.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn fit_root(out: &Path) -> PathBuf {
    out.join("fit")
}

/// Directory of a fit: `fit/m1`, or `fit/m3/<code>` for per-country fits.
pub fn fit_dir(out: &Path, kind: ModelKind, country: Option<&str>) -> PathBuf {
    let dir = fit_root(out).join(kind.name().to_ascii_lowercase());
    match country {
        Some(c) => dir.join(c),
        None => dir,
    }
}

pub fn point_estimates_path(out: &Path) -> PathBuf {
    fit_root(out).join("point_estimates.json")
}

pub fn classification_path(out: &Path) -> PathBuf {
    fit_root(out).join("classification.json")
}

pub fn project_manifest_path(out: &Path) -> PathBuf {
    out.join("project").join("manifest.json")
}

/// Creates `path` (and its directory) for buffered writing.
pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Writes a CSV file whose first line is the provenance header.
pub fn write_csv(
    path: &Path,
    prov: &Provenance,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "{}", prov.header()).map_err(|e| CliError::io(path, e))?;
    body(&mut w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a JSON artifact written by an earlier stage. A missing file means
/// that stage has not run; `stage` names it in the error.
pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<T, CliError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(missing(path, stage));
        }
        Err(e) => return Err(CliError::io(path, e)),
    };
    serde_json::from_reader(BufReader::new(f)).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn missing(path: &Path, stage: &str) -> CliError {
    CliError::MissingPrerequisite(format!("{} not found; run `{stage}` first", path.display()))
}

/// Point estimates handed from one fitting stage to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub fixed: FixedInputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub classification: CountryClassification,
}

/// A persisted fit. `draws` are the draws used downstream: the stacked
/// resample when the fit was stacked, otherwise all chains pooled.
pub struct StoredFit {
    pub chains: PosteriorChains,
    pub meta: FitMetadata,
    pub draws: FitDraws,
}

/// Writes a fit directory from scratch, replacing an earlier one.
pub fn save_fit(
    dir: &Path,
    chains: &PosteriorChains,
    stacked: Option<&DrawSet>,
    meta: &FitMetadata,
    prov: &Provenance,
) -> Result<(), CliError> {
    if dir.exists() {
        // Only this fit's own files live here; nested per-country fits sit
        // under their own model directory.
        for name in [
            CHAINS_FILE,
            STACKED_FILE,
            METADATA_FILE,
            PSRF_FILE,
            SUMMARY_FILE,
        ] {
            let p = dir.join(name);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
            }
        }
    }
    write_csv(&dir.join(CHAINS_FILE), prov, |w| {
        write_chains_csv(&chains.chains, w)
    })?;
    if let Some(s) = stacked {
        write_csv(&dir.join(STACKED_FILE), prov, |w| {
            write_chains_csv(std::slice::from_ref(s), w)
        })?;
    }
    write_csv(&dir.join(PSRF_FILE), prov, |w| write_psrf(&meta.psrf, w))?;
    let used = stacked.cloned().unwrap_or_else(|| chains.pooled());
    let summary_params: Vec<&str> = used
        .names()
        .iter()
        .map(String::as_str)
        .filter(|n| !is_path_parameter(n))
        .collect();
    let summary = point_estimates(&used, &summary_params).map_err(CliError::core)?;
    write_csv(&dir.join(SUMMARY_FILE), prov, |w| {
        writeln!(w, "parameter,mean,q50,q025,q975,q10,q90")?;
        for (name, s) in &summary {
            let q = &s.quantiles;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                csv_field(name),
                s.mean,
                q.median,
                q.q025,
                q.q975,
                q.q10,
                q.q90
            )?;
        }
        Ok(())
    })?;
    write_json(&dir.join(METADATA_FILE), meta)
}

pub fn write_psrf<W: Write>(
    psrf: &std::collections::BTreeMap<String, Option<f64>>,
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "parameter,psrf")?;
    for (name, r) in psrf {
        match r {
            Some(r) => writeln!(w, "{},{r}", csv_field(name))?,
            None => writeln!(w, "{},NA", csv_field(name))?,
        }
    }
    Ok(())
}

/// Annual fluctuation terms are reported as paths, not one by one.
pub fn is_path_parameter(name: &str) -> bool {
    name.starts_with("eta[")
}

fn csv_field(s: &str) -> String {
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s.to_string()
    }
}

/// Loads the fit in `dir`; `stage` names the command that produces it.
pub fn load_fit(dir: &Path, stage: &str) -> Result<StoredFit, CliError> {
    let meta: FitMetadata = read_json(&dir.join(METADATA_FILE), stage)?;
    let chains = read_chains(&dir.join(CHAINS_FILE), stage)?;
    let chains = PosteriorChains::from_parts(&meta, chains);
    let stacked = dir.join(STACKED_FILE);
    let draws = if stacked.exists() {
        let mut sets = read_chains(&stacked, stage)?;
        FitDraws {
            spec: meta.spec.clone(),
            layout: meta.layout.clone(),
            draws: sets.remove(0),
        }
    } else {
        FitDraws::from_chains(&chains)
    };
    Ok(StoredFit {
        chains,
        meta,
        draws,
    })
}

fn read_chains(path: &Path, stage: &str) -> Result<Vec<DrawSet>, CliError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing(path, stage)),
        Err(e) => return Err(CliError::io(path, e)),
    };
    read_chains_csv(BufReader::new(f)).map_err(CliError::core)
}

/// Per-country fits found under `fit/<kind>/`, by country code.
pub fn per_country_fits(out: &Path, kind: ModelKind) -> Result<Vec<String>, CliError> {
    let dir = fit_dir(out, kind, None);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut codes = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))? {
        let entry = entry.map_err(|e| CliError::io(&dir, e))?;
        if entry.path().join(METADATA_FILE).exists() {
            codes.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    codes.sort();
    Ok(codes)
}
