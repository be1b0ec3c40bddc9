use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use groundrl_core::seed::sha256_hex;
use serde::Serialize;

/// Side-car record written next to every output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    /// SHA-256 of the effective configuration as canonical JSON.
    pub config_digest: String,
    /// SHA-256 of the input file bytes; `None` for generated inputs.
    pub input_digest: Option<String>,
    pub rng_seed: Option<u64>,
    pub timestamp: String,
    pub warnings: Vec<String>,
    pub output: String,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &'static str, config: &C, output: &Path) -> Result<Self> {
        Ok(Self {
            command,
            config_digest: sha256_hex(&serde_json::to_vec(config)?),
            input_digest: None,
            rng_seed: None,
            timestamp: chrono::Utc::now().to_rfc3339(),
            warnings: Vec::new(),
            output: output.display().to_string(),
            summary: serde_json::Value::Null,
        })
    }

    pub fn with_input(mut self, input: &Path) -> Result<Self> {
        let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
        self.input_digest = Some(sha256_hex(&bytes));
        Ok(self)
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn write(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::path_for(output);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
