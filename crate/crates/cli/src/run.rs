//! Run directories and manifests.
//!
//! A run lives at `<out>/run-<config hash>/`. Each command invocation writes
//! a fresh `<verb>/v<N>/` below it: files are staged in a hidden sibling
//! directory and renamed into place once the manifest is written, so a
//! version directory is either complete or absent. Earlier versions are
//! never touched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub root: PathBuf,
    pub hash: String,
}

impl RunContext {
    pub fn new(config: ExperimentConfig) -> Self {
        let hash = config.hash();
        let root = config.output_dir.join(format!("run-{hash}"));
        Self { config, root, hash }
    }

    /// Highest completed version of `verb`, if any.
    pub fn latest(&self, verb: &str) -> Option<PathBuf> {
        let dir = self.root.join(verb);
        let entries = fs::read_dir(&dir).ok()?;
        entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let v: u32 = name.strip_prefix('v')?.parse().ok()?;
                e.path().join(MANIFEST).is_file().then_some((v, e.path()))
            })
            .max_by_key(|(v, _)| *v)
            .map(|(_, p)| p)
    }

    pub fn require(&self, verb: &str) -> Result<PathBuf> {
        self.latest(verb).ok_or_else(|| {
            CliError::MissingInput(format!(
                "no completed `{verb}` output under {}; run `nkconsensus {verb}` first",
                self.root.display()
            ))
        })
    }

    pub fn stage(&self, verb: &str) -> Result<StageWriter> {
        let parent = self.root.join(verb);
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let next = fs::read_dir(&parent)
            .map_err(|e| CliError::io(&parent, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok()?.strip_prefix('v')?.parse::<u32>().ok())
            .max()
            .map_or(1, |v| v + 1);
        let final_dir = parent.join(format!("v{next}"));
        let staging = parent.join(format!(".v{next}.partial"));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
        Ok(StageWriter {
            verb: verb.to_string(),
            final_dir,
            staging,
            started: Instant::now(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                verb: verb.to_string(),
                config_hash: self.hash.clone(),
                config: self.config.clone(),
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                artifacts: Vec::new(),
                timings_secs: BTreeMap::new(),
            },
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub verb: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub artifacts: Vec<Artifact>,
    pub timings_secs: BTreeMap<String, f64>,
}

/// The only way files get written into a run.
pub struct StageWriter {
    verb: String,
    final_dir: PathBuf,
    staging: PathBuf,
    started: Instant,
    manifest: RunManifest,
}

impl StageWriter {
    /// Directory the stage will occupy once finished.
    pub fn final_dir(&self) -> &Path {
        &self.final_dir
    }

    /// Where files are staged; useful for writers that take a directory.
    pub fn staging_dir(&self) -> &Path {
        &self.staging
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    pub fn timing(&mut self, name: &str, since: Instant) {
        self.manifest
            .timings_secs
            .insert(name.to_string(), since.elapsed().as_secs_f64());
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.staging.join(name);
        fs::write(&path, contents.as_ref()).map_err(|e| CliError::io(&path, e))?;
        self.record(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Registers a file some other writer already put in the staging directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let path = self.staging.join(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let digest = Sha256::digest(&bytes);
        self.manifest.artifacts.retain(|a| a.path != name);
        self.manifest.artifacts.push(Artifact {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest
            .timings_secs
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.staging.join(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        fs::rename(&self.staging, &self.final_dir).map_err(|e| CliError::io(&self.final_dir, e))?;
        log::info!("{} written to {}", self.verb, self.final_dir.display());
        Ok(self.final_dir)
    }
}

pub fn read_manifest(dir: &Path) -> Result<serde_json::Value> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn versions_increment_and_latest_skips_partial() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            output_dir: tmp.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let ctx = RunContext::new(cfg);
        assert!(ctx.latest("train").is_none());
        assert!(matches!(ctx.require("train"), Err(CliError::MissingInput(_))));

        let mut w = ctx.stage("train").unwrap();
        w.write("a.csv", "x\n1\n").unwrap();
        let v1 = w.finish().unwrap();
        assert!(v1.ends_with("train/v1"));

        // An abandoned stage is invisible; the next stage takes its slot.
        let abandoned = ctx.stage("train").unwrap();
        drop(abandoned);
        assert_eq!(ctx.latest("train").unwrap(), v1);

        let mut w = ctx.stage("train").unwrap();
        w.write("a.csv", "x\n2\n").unwrap();
        let v2 = w.finish().unwrap();
        assert_eq!(ctx.latest("train").unwrap(), v2);
        assert_eq!(fs::read_to_string(v1.join("a.csv")).unwrap(), "x\n1\n");

        let m = read_manifest(&v2).unwrap();
        assert_eq!(m["artifacts"][0]["path"], "a.csv");
        assert_eq!(m["artifacts"][0]["bytes"], 4);
        assert_eq!(m["config_hash"], ctx.hash.as_str());
    }
}
