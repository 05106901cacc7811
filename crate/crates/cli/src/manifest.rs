//! Provenance written next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Config, Source};

/// SHA-256 of the canonical JSON form of a config, ignoring its seed.
pub fn config_hash(cfg: &Config) -> String {
    let canonical = Config { seed: None, ..cfg.clone() };
    let json = serde_json::to_string(&canonical).expect("configs serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// The short form that heads every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestLine<'a> {
    pub config_sha256: &'a str,
    pub seed: u64,
    pub version: &'a str,
}

/// The full run manifest, written as `<output>.manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'a str,
    pub command: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub seed_source: &'a str,
    pub preset: Option<&'a str>,
    pub provenance: BTreeMap<&'static str, Source>,
    pub config: &'a Config,
    pub columns: &'a [&'a str],
    pub rows: usize,
}

impl RunManifest<'_> {
    pub fn line(&self) -> String {
        let line = ManifestLine {
            config_sha256: &self.config_sha256,
            seed: self.seed,
            version: self.tool,
        };
        format!("# manifest {}", serde_json::to_string(&line).expect("manifest serializes"))
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_seed_but_not_parameters() {
        let a = Config::default();
        let b = Config { seed: Some(3), ..Config::default() };
        let mut c = Config::default();
        c.system.p_loc = 0.6;
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("out/fig2.csv")), PathBuf::from("out/fig2.csv.manifest.json"));
    }
}
