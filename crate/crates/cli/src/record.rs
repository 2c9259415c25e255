//! Run orchestration and the `manifest.json` run record.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Kind};
use crate::experiments;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: Kind,
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub files: Vec<FileEntry>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
    /// The normalized configuration the run executed.
    pub config: serde_json::Value,
}

impl RunRecord {
    pub fn load(dir: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| format!("{}: {e}", dir.join(MANIFEST).display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{MANIFEST}: {e}"))
    }
}

pub fn file_digest(path: &Path) -> std::io::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Where the run writes: the configured output, relative to the config file.
pub fn output_dir(cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    if cfg.output.is_absolute() {
        cfg.output.clone()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(&cfg.output)
    }
}

/// Execute the experiment into a staging directory next to `out`, then move
/// it into place. Nothing is left behind on failure.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunRecord, String> {
    let start = Instant::now();
    if out.exists() && !out.join(MANIFEST).exists() && fs::read_dir(out).map_err(|e| e.to_string())?.next().is_some() {
        return Err(format!("{} exists, is not a run directory and is not empty; refusing to overwrite", out.display()));
    }
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    let name = out.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| e.to_string())?;
    }
    fs::create_dir(&staging).map_err(|e| format!("{}: {e}", staging.display()))?;
    let result = stage_run(cfg, &staging, start);
    match result {
        Ok(record) => {
            if out.exists() {
                fs::remove_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
            }
            fs::rename(&staging, out).map_err(|e| format!("{}: {e}", out.display()))?;
            Ok(record)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn stage_run(cfg: &ExperimentConfig, dir: &Path, start: Instant) -> Result<RunRecord, String> {
    let hash = cfg.hash();
    let outputs = experiments::execute(cfg, dir, &hash)?;
    let mut files = Vec::with_capacity(outputs.files.len());
    for f in &outputs.files {
        let (sha256, bytes) = file_digest(&dir.join(f)).map_err(|e| format!("{f}: {e}"))?;
        files.push(FileEntry { path: f.clone(), sha256, bytes });
    }
    let record = RunRecord {
        experiment: cfg.experiment,
        config_hash: hash,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        files,
        wall_time_s: start.elapsed().as_secs_f64(),
        warnings: outputs.warnings,
        config: cfg.canonical(),
    };
    let text = serde_json::to_string_pretty(&record).map_err(|e| e.to_string())?;
    fs::write(dir.join(MANIFEST), text).map_err(|e| e.to_string())?;
    Ok(record)
}
