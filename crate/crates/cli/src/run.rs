//! Per-run output directories and manifests.
//!
//! Outputs are buffered and written together with `manifest.json` into a
//! fresh directory `<out-dir>/<command>-<UTC timestamp>[-n]`. Every file
//! read through [`Run::read`] is recorded with its SHA-256 so that a
//! replay can refuse inputs that have changed.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub created_at: String,
    /// The parsed command line, after environment overrides.
    pub config: Value,
    /// Resolved parameters as the command used them.
    pub effective: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Run {
    command: String,
    inputs: Vec<InputDigest>,
    outputs: Vec<(String, String)>,
    effective: Value,
}

impl Run {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            effective: Value::Null,
        }
    }

    /// Reads a UTF-8 input file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display())).map_err(Failure::Config)?;
        self.record(&path.display().to_string(), &bytes);
        String::from_utf8(bytes)
            .map_err(|_| Failure::Config(anyhow!("{} is not UTF-8", path.display())))
    }

    /// Records an input that is not a file, such as bundled data.
    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn output(&mut self, name: &str, contents: String) {
        self.outputs.push((name.to_string(), contents));
    }

    pub fn effective(&mut self, value: Value) {
        self.effective = value;
    }

    /// Creates the run directory and writes outputs and manifest.
    pub fn finish(&self, parent: &Path, config: Value, error: Option<String>) -> anyhow::Result<PathBuf> {
        let dir = fresh_dir(parent, &self.command)?;
        for (name, contents) in &self.outputs {
            fs::write(dir.join(name), contents).with_context(|| format!("cannot write {name}"))?;
        }
        let manifest = Manifest {
            tool: "plangen".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            config,
            effective: self.effective.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.iter().map(|(n, _)| n.clone()).collect(),
            status: if error.is_some() { "failed" } else { "ok" }.into(),
            error,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
        fs::write(dir.join(MANIFEST), text).context("cannot write manifest")?;
        Ok(dir)
    }
}

fn fresh_dir(parent: &Path, command: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.6fZ");
    for n in 0.. {
        let name = if n == 0 {
            format!("{command}-{stamp}")
        } else {
            format!("{command}-{stamp}-{n}")
        };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("cannot create {}", dir.display())),
        }
    }
    unreachable!()
}

/// Loads a manifest and checks that its file inputs are unchanged.
pub fn load_for_replay(path: &Path) -> Result<Manifest, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))
        .map_err(Failure::Config)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .with_context(|| format!("malformed manifest {}", path.display()))
        .map_err(Failure::Config)?;
    for input in &manifest.inputs {
        if input.path.starts_with("bundled:") {
            continue;
        }
        let bytes = fs::read(&input.path)
            .with_context(|| format!("replay input {} is missing", input.path))
            .map_err(Failure::Config)?;
        let digest = sha256_hex(&bytes);
        if digest != input.sha256 {
            return Err(Failure::Config(anyhow!(
                "replay input {} changed: sha256 {digest}, manifest has {}",
                input.path,
                input.sha256
            )));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_abc() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn runs_never_share_a_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = Run::new("x");
        run.output("a.txt", "1".into());
        let a = run.finish(tmp.path(), Value::Null, None).unwrap();
        let b = run.finish(tmp.path(), Value::Null, None).unwrap();
        assert_ne!(a, b);
        assert_eq!(fs::read_to_string(b.join("a.txt")).unwrap(), "1");
        let m: Manifest = serde_json::from_str(&fs::read_to_string(a.join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(m.outputs, vec!["a.txt"]);
        assert_eq!(m.status, "ok");
    }
}
