use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub status: Status,
    pub started: String,
    pub finished: Option<String>,
    pub error: Option<String>,
    /// sha256 of each output, keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Tracks one command's output directory. The manifest is rewritten on every
/// state change so an interrupted run is visibly `running`.
pub struct Run {
    dir: PathBuf,
    manifest: Manifest,
    written: Vec<String>,
}

impl Run {
    pub fn start(dir: &Path, command: &str, seed: u64, config: &impl Serialize) -> Result<Run> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let run = Run {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config: serde_json::to_value(config)?,
                status: Status::Running,
                started: now(),
                finished: None,
                error: None,
                outputs: BTreeMap::new(),
                summary: serde_json::Value::Null,
            },
            written: Vec::new(),
        };
        run.save()?;
        Ok(run)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn set_summary(&mut self, summary: serde_json::Value) {
        self.manifest.summary = summary;
    }

    /// Writes `contents` to `rel` inside the output directory.
    pub fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(rel.to_string());
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    /// Registers a file written by other code under `rel`.
    pub fn record(&mut self, rel: &str) {
        self.written.push(rel.to_string());
    }

    pub fn finish(mut self) -> Result<()> {
        for rel in &self.written {
            let digest = sha256_file(&self.dir.join(rel))?;
            self.manifest.outputs.insert(rel.clone(), digest);
        }
        self.manifest.status = Status::Complete;
        self.manifest.finished = Some(now());
        self.save()
    }

    /// Removes partial outputs and records the error.
    pub fn fail(mut self, err: &anyhow::Error) -> Result<()> {
        for rel in &self.written {
            let _ = fs::remove_file(self.dir.join(rel));
        }
        self.manifest.outputs.clear();
        self.manifest.status = Status::Failed;
        self.manifest.finished = Some(now());
        self.manifest.error = Some(format!("{err:#}"));
        self.save()
    }

    fn save(&self) -> Result<()> {
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Runs `body` inside a tracked output directory, finishing or failing the
/// manifest according to its result.
pub fn tracked(
    dir: &Path,
    command: &str,
    seed: u64,
    config: &impl Serialize,
    body: impl FnOnce(&mut Run) -> Result<()>,
) -> Result<()> {
    let mut run = Run::start(dir, command, seed, config)?;
    match body(&mut run) {
        Ok(()) => run.finish(),
        Err(err) => {
            run.fail(&err)?;
            Err(err)
        }
    }
}

/// For `--resume`: the previous manifest must describe the same command and
/// configuration.
pub fn check_resumable(dir: &Path, command: &str, config: &impl Serialize) -> Result<()> {
    let prev = read_manifest(dir).context("--resume needs the manifest of an earlier run")?;
    if prev.command != command {
        anyhow::bail!(
            "--resume: {} holds a `{}` run, not `{command}`",
            dir.display(),
            prev.command
        );
    }
    if prev.config != serde_json::to_value(config)? {
        anyhow::bail!(
            "--resume: configuration differs from the one recorded in {}",
            dir.join(MANIFEST).display()
        );
    }
    Ok(())
}
