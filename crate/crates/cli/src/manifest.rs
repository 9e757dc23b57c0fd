//! Run manifests: every command that writes results also writes a manifest
//! recording the tool version, the command, content hashes of all inputs,
//! and the effective parameters. Manifests carry logical names and hashes
//! only (no absolute paths, no timestamps), so reruns of identical inputs
//! produce byte-identical manifests anywhere.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<InputRecord>,
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            tool: "cpm",
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: Vec::new(),
            parameters: serde_json::Value::Null,
            outputs: Vec::new(),
        }
    }

    /// Records one input file under a logical name.
    pub fn add_input(&mut self, name: impl Into<String>, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputRecord {
            name: name.into(),
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }

    /// Records every file under a directory, named `<role>/<relative path>`.
    pub fn add_input_dir(&mut self, role: &str, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        files.sort();
        for file in files {
            let rel = file.strip_prefix(dir).expect("collected under dir");
            self.add_input(format!("{role}/{}", rel.display()), &file)?;
        }
        Ok(())
    }

    pub fn set_parameters(&mut self, parameters: serde_json::Value) {
        self.parameters = parameters;
    }

    pub fn add_output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    /// Finalizes ordering and writes the manifest to `path`.
    pub fn write(mut self, path: &Path) -> Result<()> {
        self.inputs.sort_by(|a, b| a.name.cmp(&b.name));
        self.outputs.sort();
        let text = serde_json::to_string_pretty(&self)?;
        fs::write(path, text + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.is_file() {
            out.push(path);
        }
    }
    Ok(())
}

/// Manifest path for a file output: `<output>.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    name.push_str(".manifest.json");
    output.with_file_name(name)
}
