use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use ruee_core::config::ScenarioConfig;

use crate::CliError;

/// Tracks the files written into the output directory.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    config_sha256: String,
    seed: u64,
    trials: usize,
    files: &'a [String],
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Effective config, its hash, seed and tool version.
    pub fn write_manifest(&mut self, command: &str, cfg: &ScenarioConfig) -> Result<(), CliError> {
        let text = cfg.to_toml();
        std::fs::write(self.path("scenario.toml"), &text)?;
        let hash = Sha256::digest(text.as_bytes());
        let manifest = Manifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config_sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
            seed: cfg.sweep.seed,
            trials: cfg.sweep.trials,
            files: &self.files,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(self.dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}
