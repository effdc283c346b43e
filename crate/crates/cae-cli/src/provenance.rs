//! Provenance records attached to generated files: what produced them,
//! from which inputs, with which seeds.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// SHA-256 of a file, hex-encoded.
pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Standard provenance block written next to artifacts.
#[derive(Debug, Serialize)]
pub struct Provenance {
    /// The exact command line that produced the artifact.
    pub command: Vec<String>,
    /// Input files and their checksums.
    pub inputs: Vec<FileRef>,
    /// Output files and their checksums.
    pub outputs: Vec<FileRef>,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

impl Provenance {
    pub fn new(wall_seconds: f64) -> Self {
        Provenance {
            command: std::env::args().collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_seconds,
        }
    }

    pub fn input(mut self, path: &Path) -> anyhow::Result<Self> {
        self.inputs.push(FileRef {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        });
        Ok(self)
    }

    pub fn output(mut self, path: &Path) -> anyhow::Result<Self> {
        self.outputs.push(FileRef {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        });
        Ok(self)
    }

    /// Writes the record as pretty JSON.
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
