//! Output directory bookkeeping: every file goes through [`Output::write`], which
//! records its checksum in `manifest.toml`.

use crate::config::{sha256_hex, Loaded};
use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST: &str = "manifest.toml";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: String,
    pub message: String,
    /// The quantity that crossed its threshold.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    /// Kept as text: TOML integers are signed.
    pub seed: String,
    pub wall_clock_s: f64,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub theorem: String,
    pub spec: String,
    pub tuple: String,
    pub alpha: usize,
    /// PASS, FAIL or SKIP.
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
    pub note: String,
}

impl VerdictRecord {
    fn key(&self) -> (&str, &str, &str, usize, &str) {
        let window = self.note.split(':').next().unwrap_or("");
        (&self.theorem, &self.spec, &self.tuple, self.alpha, window)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_sha256: String,
    #[serde(default)]
    pub runs: Vec<RunRecord>,
    #[serde(default)]
    pub verdicts: Vec<VerdictRecord>,
    /// Relative path to sha256.
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> CliResult<Option<Self>> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        toml::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Integrity(format!("{} is unreadable: {e}", path.display())))
    }

    /// Recompute every listed checksum.
    pub fn verify_files(&self, dir: &Path) -> CliResult<()> {
        for (rel, sum) in &self.files {
            let bytes = std::fs::read(dir.join(rel))
                .map_err(|e| CliError::Integrity(format!("{rel} is listed but unreadable: {e}")))?;
            let actual = sha256_hex(&bytes);
            if &actual != sum {
                return Err(CliError::Integrity(format!("{rel}: checksum {actual} does not match {sum}")));
            }
        }
        Ok(())
    }
}

/// The single writer for one command invocation.
pub struct Output {
    root: PathBuf,
    manifest: RunManifest,
    run: RunRecord,
    started: Instant,
}

impl Output {
    /// Continue an existing manifest written for the same config, or start a new one.
    pub fn open(root: &Path, loaded: &Loaded, command: &str, seed: u64) -> CliResult<Self> {
        std::fs::create_dir_all(root)?;
        let manifest = match RunManifest::read(root)? {
            Some(m) if m.config_sha256 == loaded.sha256 && m.version == VERSION => m,
            _ => RunManifest {
                version: VERSION.to_string(),
                config_sha256: loaded.sha256.clone(),
                ..RunManifest::default()
            },
        };
        let run = RunRecord {
            command: command.to_string(),
            seed: seed.to_string(),
            wall_clock_s: 0.0,
            constants: BTreeMap::new(),
            warnings: Vec::new(),
        };
        Ok(Output { root: root.to_path_buf(), manifest, run, started: Instant::now() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.manifest.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn constant(&mut self, name: impl Into<String>, value: f64) {
        self.run.constants.insert(name.into(), value);
    }

    pub fn warn(&mut self, kind: &str, message: impl Into<String>, value: f64) {
        let message = message.into();
        eprintln!("warning [{kind}]: {message} (value {value:e})");
        self.run.warnings.push(Warning { kind: kind.to_string(), message, value });
    }

    /// Newer verdicts replace older ones for the same row.
    pub fn verdict(&mut self, v: VerdictRecord) {
        self.manifest.verdicts.retain(|old| old.key() != v.key());
        self.manifest.verdicts.push(v);
    }

    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.run.wall_clock_s = self.started.elapsed().as_secs_f64();
        self.manifest.runs.push(self.run);
        let text = toml::to_string(&self.manifest)
            .map_err(|e| CliError::Io(std::io::Error::other(format!("manifest serialization: {e}"))))?;
        std::fs::write(self.root.join(MANIFEST), text)?;
        Ok(self.manifest)
    }
}
