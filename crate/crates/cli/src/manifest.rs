use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Done,
    Failed { message: String },
}

/// Largest conservation drifts seen during a quench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub norm_drift: f64,
    pub number_drift: f64,
    pub initial_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub w: f64,
    pub index: usize,
    pub seed: u64,
    /// Output file relative to the run directory.
    pub output: String,
    pub status: TaskStatus,
    #[serde(default)]
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec_digest: String,
    pub software_version: String,
    pub seed_base: u64,
    /// `seed = splitmix64(seed_base + index · 0x9E3779B97F4A7C15)`; the same
    /// seed is used for every disorder strength.
    pub seed_rule: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub tasks: Vec<TaskRecord>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn load(dir: &Path) -> CliResult<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| CliError::Parse {
                path: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(format!("reading {}", path.display()), e)),
        }
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn failed(&self) -> usize {
        self.tasks.iter().filter(|t| matches!(t.status, TaskStatus::Failed { .. })).count()
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let ctx = |what: &str| format!("{what} {}", path.display());
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(ctx("creating directory for"), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(ctx("creating"), e))?;
    f.write_all(bytes).map_err(|e| CliError::io(ctx("writing"), e))?;
    f.sync_all().map_err(|e| CliError::io(ctx("syncing"), e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(ctx("renaming into"), e))
}
