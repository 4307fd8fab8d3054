use std::fs;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{CliError, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex digits of the SHA-256 digest kept in headers.
const HASH_LEN: usize = 16;

/// Version and configuration hash stamped on every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(cfg: &RunConfig, with_inputs: bool) -> Result<Self, CliError> {
        Ok(Provenance {
            version: VERSION.to_string(),
            config_hash: config_hash(cfg, with_inputs)?,
        })
    }

    pub fn header(&self) -> String {
        header_line(&self.config_hash)
    }
}

pub fn header_line(hash: &str) -> String {
    format!("# sexratio {VERSION} config={hash}")
}

/// Hash of the effective configuration.
///
/// The output directory and thread count do not change any result and are
/// left out. With `with_inputs`, input tables enter through the digest of
/// their contents rather than their paths, so a run moved to another
/// directory keeps its hash.
pub fn config_hash(cfg: &RunConfig, with_inputs: bool) -> Result<String, CliError> {
    let mut value = serde_json::to_value(cfg).expect("configuration serializes to JSON");
    let map = value
        .as_object_mut()
        .expect("configuration is a JSON object");
    map.remove("out");
    map.remove("threads");
    map.remove("inputs");
    if with_inputs {
        let mut inputs = serde_json::Map::new();
        for (name, path) in cfg.input_paths() {
            let digest = match fs::read(&path) {
                Ok(bytes) => Value::String(hex::encode(Sha256::digest(&bytes))),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Value::Null,
                Err(e) => return Err(CliError::io(&path, e)),
            };
            inputs.insert(name.to_string(), digest);
        }
        map.insert("inputs".into(), Value::Object(inputs));
    }
    // serde_json maps are ordered by key, so this text is canonical.
    let canonical = value.to_string();
    let mut hex = hex::encode(Sha256::digest(canonical.as_bytes()));
    hex.truncate(HASH_LEN);
    Ok(hex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn output_location_does_not_change_the_hash() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: PathBuf::from("/elsewhere"),
            threads: Some(3),
            ..Default::default()
        };
        assert_eq!(
            config_hash(&a, false).unwrap(),
            config_hash(&b, false).unwrap()
        );
        let c = RunConfig {
            seed: 2,
            ..Default::default()
        };
        assert_ne!(
            config_hash(&a, false).unwrap(),
            config_hash(&c, false).unwrap()
        );
        assert_eq!(config_hash(&a, false).unwrap().len(), HASH_LEN);
    }

    #[test]
    fn inputs_enter_by_content() {
        let dir = tempfile::tempdir().unwrap();
        let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
        for d in [&d1, &d2] {
            fs::create_dir_all(d.join("world")).unwrap();
            fs::write(d.join("world/observations.csv"), "x").unwrap();
        }
        let cfg = |out: &PathBuf| RunConfig {
            out: out.clone(),
            ..Default::default()
        };
        let h1 = config_hash(&cfg(&d1), true).unwrap();
        assert_eq!(h1, config_hash(&cfg(&d2), true).unwrap());
        fs::write(d2.join("world/observations.csv"), "y").unwrap();
        assert_ne!(h1, config_hash(&cfg(&d2), true).unwrap());
        assert_ne!(h1, config_hash(&cfg(&d1), false).unwrap());
    }

    #[test]
    fn header_names_version_and_hash() {
        assert_eq!(
            header_line("abc"),
            format!("# sexratio {VERSION} config=abc")
        );
    }
}
