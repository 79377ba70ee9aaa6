use std::path::{Path, PathBuf};

use pbvgan::cgan::CganConfig;
use pbvgan::classify::ClassifierConfig;
use pbvgan::dataset::DEFAULT_SPLIT;
use pbvgan::gan::GanConfig;
use pbvgan::pcap_ingest::{IngestConfig, InputFile};
use pbvgan::preprocess::PreprocessConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Augmenter {
    None,
    Ros,
    Smote,
    Gan,
    #[default]
    Cgan,
}

impl Augmenter {
    pub fn name(self) -> &'static str {
        match self {
            Augmenter::None => "unbalanced",
            Augmenter::Ros => "ROS",
            Augmenter::Smote => "SMOTE",
            Augmenter::Gan => "GAN",
            Augmenter::Cgan => "CGAN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { fractions: DEFAULT_SPLIT }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceConfig {
    /// Same target for every class.
    pub target_per_class: usize,
    /// Per-class targets; overrides `target_per_class` when non-empty.
    pub targets: Vec<usize>,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            target_per_class: 10_000,
            targets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub method: Augmenter,
    pub smote_k: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            method: Augmenter::Cgan,
            smote_k: 5,
        }
    }
}

/// Everything a pipeline run depends on. A bare file yields the full-size
/// defaults: 1480-byte vectors, 100-d noise, batches of 64, Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Class names indexed by label. Empty means `class0`, `class1`, ...
    pub classes: Vec<String>,
    pub inputs: Vec<InputFile>,
    pub ingest: IngestConfig,
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    pub balance: BalanceConfig,
    pub augment: AugmentConfig,
    pub gan: GanConfig,
    pub cgan: CganConfig,
    pub classifier: ClassifierConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("run"),
            classes: Vec::new(),
            inputs: Vec::new(),
            ingest: IngestConfig::default(),
            preprocess: PreprocessConfig::default(),
            split: SplitConfig::default(),
            balance: BalanceConfig::default(),
            augment: AugmentConfig::default(),
            gan: GanConfig::default(),
            cgan: CganConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Load a config file; input paths and the output directory are resolved
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        for input in &mut config.inputs {
            if input.path.is_relative() {
                input.path = base.join(&input.path);
            }
        }
        Ok(config)
    }

    /// Push the global seed into every component config.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.gan.seed = seed;
        self.cgan.seed = seed;
        self.classifier.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_config_has_full_size_defaults() {
        let c: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(c.preprocess.fixed_len, 1480);
        assert_eq!(c.cgan.noise_dim, 100);
        assert_eq!(c.cgan.batch_size, 64);
        assert_eq!(c.gan.g_hidden, vec![256, 512]);
        assert_eq!(c.cgan.d_hidden, vec![512, 256, 128]);
        assert_eq!(c.balance.target_per_class, 10_000);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = PipelineConfig {
            classes: vec!["a".into(), "b".into()],
            ..PipelineConfig::default()
        }
        .with_seed(9);
        let back: PipelineConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("sed = 3").is_err());
    }
}
