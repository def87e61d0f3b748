use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Format versions of the artifacts a run can produce.
#[derive(Debug, Serialize)]
pub struct ArtifactVersions {
    pub tool: &'static str,
    pub setup: u32,
    pub scene: u32,
    pub checkpoint: u32,
}

impl Default for ArtifactVersions {
    fn default() -> Self {
        Self {
            tool: env!("CARGO_PKG_VERSION"),
            setup: ipdnn_core::em::SETUP_VERSION,
            scene: ipdnn_core::scenario::SCENE_VERSION,
            checkpoint: ipdnn_core::net::CHECKPOINT_VERSION,
        }
    }
}

/// Record of one command: enough to rerun it and to find every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub versions: ArtifactVersions,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
}

/// Collects inputs and outputs while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
    out_dir: PathBuf,
}

impl Recorder {
    pub fn new(command: &str, out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                seed: None,
                config: serde_json::Value::Null,
                inputs: Vec::new(),
                outputs: Vec::new(),
                versions: ArtifactVersions::default(),
                started_unix_s,
                wall_time_s: 0.0,
            },
            started: Instant::now(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    /// Registers `name` as an output and returns its path.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.manifest.outputs.push(p.clone());
        p
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(())
    }

    /// Writes the manifest through a temporary file and a rename so a reader
    /// never sees a partial document.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        let path = self.out_dir.join(MANIFEST_FILE);
        let tmp = self.out_dir.join(format!(".{MANIFEST_FILE}.tmp"));
        self.manifest.outputs.push(path.clone());
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&tmp, text + "\n").with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("renaming to {}", path.display()))?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
