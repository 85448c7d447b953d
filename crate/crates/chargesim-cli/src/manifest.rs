//! Run manifest: everything needed to re-execute a sweep and verify that the
//! outputs are byte-identical. The manifest embeds the config and profiles
//! text, so replay does not depend on the original files still existing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{self, AxisValues, LoadedConfig};
use crate::runner::{self, ExecutedSweep, RunStatus};

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEntry {
    pub index: usize,
    pub axis: AxisValues,
    pub label: String,
    /// "ok" or "failed: reason"; failures stay on record.
    pub status: String,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub config_path: String,
    pub config_sha256: String,
    pub config_text: String,
    pub profiles_text: String,
    pub master_seed: u64,
    pub runs: Vec<RunEntry>,
    pub summary_artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest was written by {tool} {manifest_version}, this binary is {tool} {current_version}; re-run instead of replaying")]
    VersionMismatch {
        tool: String,
        manifest_version: String,
        current_version: String,
    },
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Runner(#[from] runner::RunnerError),
}

pub fn build(loaded: &LoadedConfig, seed: u64, sweep: &ExecutedSweep) -> Manifest {
    Manifest {
        tool: "chargesim".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_path: loaded.path.clone(),
        config_sha256: sha256_hex(loaded.text.as_bytes()),
        config_text: loaded.text.clone(),
        profiles_text: loaded.profiles_text.clone(),
        master_seed: seed,
        runs: sweep
            .runs
            .iter()
            .map(|r| RunEntry {
                index: r.index,
                axis: r.axis,
                label: r.label.clone(),
                status: match &r.status {
                    RunStatus::Ok => "ok".into(),
                    RunStatus::Failed(msg) => format!("failed: {msg}"),
                },
                artifacts: r
                    .artifacts
                    .iter()
                    .map(|a| ArtifactEntry { path: a.name.clone(), sha256: a.sha256.clone() })
                    .collect(),
            })
            .collect(),
        summary_artifacts: sweep
            .summary_artifacts
            .iter()
            .map(|a| ArtifactEntry { path: a.name.clone(), sha256: a.sha256.clone() })
            .collect(),
    }
}

pub fn write(manifest: &Manifest, out_dir: &Path) -> Result<PathBuf, ManifestError> {
    let path = out_dir.join(MANIFEST_NAME);
    let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::write(&path, bytes)
        .map_err(|e| ManifestError::Io { path: path.display().to_string(), source: e })?;
    Ok(path)
}

pub fn read(path: &Path) -> Result<Manifest, ManifestError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ManifestError::Io { path: display.clone(), source: e })?;
    serde_json::from_str(&text).map_err(|e| ManifestError::Parse { path: display, source: e })
}

#[derive(Debug, Clone, Serialize)]
pub struct Divergence {
    pub path: String,
    pub expected_sha256: String,
    pub actual_sha256: Option<String>,
}

#[derive(Debug)]
pub struct ReplayReport {
    pub out_dir: PathBuf,
    pub artifacts_checked: usize,
    pub divergences: Vec<Divergence>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Re-executes the sweep recorded in the manifest into `out_dir` and compares
/// every recorded artifact hash against the fresh outputs.
pub fn replay(
    manifest: &Manifest,
    out_dir: &Path,
    workers: usize,
) -> Result<ReplayReport, ManifestError> {
    let current_version = env!("CARGO_PKG_VERSION");
    if manifest.tool_version != current_version {
        return Err(ManifestError::VersionMismatch {
            tool: manifest.tool.clone(),
            manifest_version: manifest.tool_version.clone(),
            current_version: current_version.into(),
        });
    }
    let loaded = LoadedConfig {
        path: format!("{} (embedded in manifest)", manifest.config_path),
        text: manifest.config_text.clone(),
        profiles_text: manifest.profiles_text.clone(),
        config: config::parse_config(&manifest.config_text, &manifest.config_path)?,
    };
    let mut validated = config::validate(&loaded)?;
    validated.seed = manifest.master_seed;
    let sweep = runner::execute(&validated, out_dir, workers)?;

    let mut fresh: std::collections::BTreeMap<String, String> = std::collections::BTreeMap::new();
    for run in &sweep.runs {
        for a in &run.artifacts {
            fresh.insert(a.name.clone(), a.sha256.clone());
        }
    }
    for a in &sweep.summary_artifacts {
        fresh.insert(a.name.clone(), a.sha256.clone());
    }

    let mut divergences = Vec::new();
    let mut checked = 0;
    let recorded = manifest
        .runs
        .iter()
        .flat_map(|r| r.artifacts.iter())
        .chain(manifest.summary_artifacts.iter());
    for entry in recorded {
        checked += 1;
        match fresh.get(&entry.path) {
            Some(h) if *h == entry.sha256 => {}
            other => divergences.push(Divergence {
                path: entry.path.clone(),
                expected_sha256: entry.sha256.clone(),
                actual_sha256: other.cloned(),
            }),
        }
    }
    Ok(ReplayReport { out_dir: out_dir.to_path_buf(), artifacts_checked: checked, divergences })
}
