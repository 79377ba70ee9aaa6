use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Context, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub seconds: f64,
    #[serde(default)]
    pub inputs: Vec<Artifact>,
    #[serde(default)]
    pub outputs: Vec<Artifact>,
}

/// Record of a run directory: tool version, the config used, and one entry
/// per stage with hashed inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// TOML snapshot of the effective configuration.
    pub config: String,
    #[serde(default, rename = "stage")]
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config: String) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            stages: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).ctx(path.display().to_string())?;
        toml::from_str(&text)
            .map(Some)
            .map_err(|e| crate::error::CliError::data(format!("{}: {e}", path.display())))
    }

    /// Replace any earlier record of the same stage.
    pub fn record(&mut self, stage: StageRecord) {
        self.stages.retain(|s| s.name != stage.name);
        self.stages.push(stage);
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).expect("manifest serializes");
        std::fs::write(&path, text).ctx(path.display().to_string())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).ctx(path.display().to_string())?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
