//! Run configuration and output manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wardcast_core::calendar::{CalendarDate, DateRange};
use wardcast_core::dataset::SeriesKey;
use wardcast_core::eval::ModelKind;
use wardcast_core::experiment::ExperimentConfig;
use wardcast_core::imputer::AdditiveConfig;
use wardcast_core::synthgen::GeneratorConfig;
use wardcast_core::tuner::{GbtGrid, LstmGrid};

use crate::error::{CliError, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    /// Models to tune; only `gbt` and `lstm` have grids.
    pub models: Vec<ModelKind>,
    pub series: SeriesKey,
    pub gbt_grid: GbtGrid,
    pub lstm_grid: LstmGrid,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self { models: Vec::new(), series: SeriesKey::TOTAL, gbt_grid: GbtGrid::default(), lstm_grid: LstmGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub series: SeriesKey,
    /// Bars shown before the remainder bucket.
    pub top_k: usize,
    /// Test origin to explain; the last one when absent.
    pub origin: Option<CalendarDate>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { series: SeriesKey::TOTAL, top_k: 10, origin: None }
    }
}

/// Everything a pipeline run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    /// Window to impute; defaults to the generator's anomaly window.
    pub anomaly_window: Option<DateRange>,
    pub imputer: AdditiveConfig,
    pub impute_seed: u64,
    pub experiment: ExperimentConfig,
    pub tune: TuneConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            anomaly_window: None,
            imputer: AdditiveConfig::default(),
            impute_seed: 1,
            experiment: ExperimentConfig::default(),
            tune: TuneConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read_bytes(path)?;
        let cfg: RunConfig = serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `--config` file when given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.experiment.validate()?;
        if self.explain.top_k == 0 {
            return Err(CliError::config("explain.top_k must be positive"));
        }
        if let Some(m) = self.tune.models.iter().find(|m| !matches!(m, ModelKind::Gbt | ModelKind::Lstm)) {
            return Err(CliError::config(format!("no tuning grid for model {m}")));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STALE_FILE: &str = "STALE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Written last into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: RunConfig,
    /// Manifests of the directories this output was built from, named by
    /// their directory's last path component.
    pub inputs: Vec<FileEntry>,
    pub files: Vec<FileEntry>,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::file(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::file(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn entry(root: &Path, p: &Path) -> Result<FileEntry> {
    let bytes = io::read_bytes(p)?;
    let rel = p.strip_prefix(root).unwrap_or(p);
    let path = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/");
    Ok(FileEntry { path, bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) })
}

/// Hashes of every file under `dir` except the manifest and stale marker of
/// `dir` itself, in path order.
pub fn list_files(dir: &Path) -> Result<Vec<FileEntry>> {
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    paths.iter().filter(|p| *p != &dir.join(MANIFEST_FILE) && *p != &dir.join(STALE_FILE)).map(|p| entry(dir, p)).collect()
}

/// Marks `dir` as incomplete until [`finish_output`] runs.
pub fn start_output(dir: &Path, command: &str) -> Result<()> {
    io::create_dir(dir)?;
    io::write_bytes(&dir.join(STALE_FILE), format!("{command} did not complete; outputs here are partial\n").as_bytes())
}

/// Writes the manifest of `dir` and clears the stale marker.
pub fn finish_output(dir: &Path, command: &str, cfg: &RunConfig, inputs: &[&Path]) -> Result<Manifest> {
    let inputs = inputs
        .iter()
        .filter_map(|d| {
            let m = d.join(MANIFEST_FILE);
            let name = d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
            m.exists().then(|| entry(d, &m).map(|e| FileEntry { path: format!("{name}/{MANIFEST_FILE}"), ..e }))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "wardcast".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: wardcast_core_version().into(),
        command: command.into(),
        config_hash: cfg.hash(),
        seeds: cfg.experiment.seeds.clone(),
        config: cfg.clone(),
        inputs,
        files: list_files(dir)?,
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    let stale = dir.join(STALE_FILE);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| CliError::file(&stale, e))?;
    }
    Ok(manifest)
}

fn wardcast_core_version() -> &'static str {
    // Both crates are released together from one workspace.
    env!("CARGO_PKG_VERSION")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default_config() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.hash(), RunConfig::default().hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>("{\"seedz\": [1]}").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
