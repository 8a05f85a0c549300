use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command run, written as `manifest.json` next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn digest_with_sidecar(path: &Path) -> CliResult<Vec<FileDigest>> {
    let mut out = vec![FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
    }];
    let sidecar = alpharec::embed::sidecar_path(path);
    if path.extension().is_some_and(|x| x == "arec") && sidecar.is_file() {
        out.push(FileDigest {
            sha256: sha256_file(&sidecar)?,
            path: sidecar,
        });
    }
    Ok(out)
}

/// Collects inputs and outputs while a command runs.
pub struct Recorder {
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, config: &impl Serialize, seeds: &[u64]) -> Self {
        Recorder {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("arguments serialize"),
            seeds: seeds.to_vec(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Digests a file (and its id sidecar for matrices) as an input.
    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| CliError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "tsv"))
                .collect();
            entries.sort();
            for p in entries {
                self.input(&p)?;
            }
            return Ok(());
        }
        self.inputs.extend(digest_with_sidecar(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    /// Digests every recorded output and writes `manifest.json` into `dir`.
    pub fn finish(self, dir: &Path) -> CliResult<()> {
        let mut outputs = Vec::new();
        for p in &self.outputs {
            outputs.extend(digest_with_sidecar(p)?);
        }
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}
