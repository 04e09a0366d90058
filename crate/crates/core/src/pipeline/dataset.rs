use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::filter::Candidate;
use crate::docmodel::write_jsonl;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const VERSION_FILE: &str = "version.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetVersion {
    pub iteration: u32,
    pub manifest_path: PathBuf,
    pub parent: Option<u32>,
    pub content_digest: String,
}

impl DatasetVersion {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }
}

/// SHA-256 over the sorted retained ids followed by the retention-relevant
/// configuration.
pub fn content_digest(retained: &[Candidate], config: &PipelineConfig) -> String {
    let mut ids: Vec<&str> = retained.iter().map(|c| c.sample_id.as_str()).collect();
    ids.sort_unstable();
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_bytes());
        hasher.update(b"\n");
    }
    hasher.update(b"\0config\0");
    let config_json =
        serde_json::to_string(&config.digest_material()).expect("config material is plain JSON");
    hasher.update(config_json.as_bytes());
    hex::encode(hasher.finalize())
}

pub fn iteration_dir(root: &Path, iteration: u32) -> PathBuf {
    root.join(format!("iter-{iteration:03}"))
}

/// Writes `iter-NNN/manifest.jsonl` and `iter-NNN/version.json` under `root`.
pub fn commit_dataset(
    root: &Path,
    retained: &[Candidate],
    config: &PipelineConfig,
    parent: Option<&DatasetVersion>,
) -> Result<DatasetVersion> {
    let iteration = parent.map(|p| p.iteration + 1).unwrap_or(0);
    let dir = iteration_dir(root, iteration);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    write_jsonl(&manifest_path, retained)?;
    let version = DatasetVersion {
        iteration,
        manifest_path,
        parent: parent.map(|p| p.iteration),
        content_digest: content_digest(retained, config),
    };
    let version_path = dir.join(VERSION_FILE);
    let json = serde_json::to_string_pretty(&version).map_err(|e| Error::Schema(e.to_string()))?;
    std::fs::write(&version_path, json + "\n").map_err(|e| Error::io(&version_path, e))?;
    Ok(version)
}

/// Most recent committed version under `root`, if any.
pub fn latest_version(root: &Path) -> Result<Option<DatasetVersion>> {
    let entries = match std::fs::read_dir(root) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(root, e)),
    };
    let mut best: Option<DatasetVersion> = None;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        let Some(n) = name.to_str().and_then(|s| s.strip_prefix("iter-")) else {
            continue;
        };
        if n.parse::<u32>().is_err() {
            continue;
        }
        let vpath = entry.path().join(VERSION_FILE);
        if !vpath.exists() {
            continue;
        }
        let v = DatasetVersion::load(&vpath)?;
        if best.as_ref().map(|b| v.iteration > b.iteration).unwrap_or(true) {
            best = Some(v);
        }
    }
    Ok(best)
}
