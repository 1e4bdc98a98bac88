use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{read_json, sidecar, write_json, SCHEMA_VERSION};

/// Written next to every output as `<output>.manifest.json`. Holds no timestamps, so it is
/// as reproducible as the output itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub version: String,
    pub subcommand: String,
    /// Full command line with every default filled in; running it again reproduces the
    /// outputs.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, config: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            argv,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            workers: None,
        }
    }

    pub fn path_for(output: &Path) -> PathBuf {
        sidecar(output, ".manifest.json")
    }

    /// Writes the manifest next to the first output.
    pub fn write(&self) -> Result<PathBuf, CliError> {
        let first = self
            .outputs
            .first()
            .ok_or_else(|| CliError::invalid("manifest has no output"))?;
        let path = Self::path_for(first);
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        read_json(path)
    }
}
