//! The single experiment configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::TrainConfig;
use crate::invr::InvrConfig;
use crate::sim::{
    FeedbackConfig, RecommenderConfig, SelectionConfig, SlateConfig, VariantName, VariantSpec, WarmupConfig, WorldConfig,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    /// `key` is the dotted path of the offending entry, empty at the top level.
    #[error("config key `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub warmup: WarmupConfig,
    pub train: TrainConfig,
    pub invr: InvrConfig,
    pub slate: SlateConfig,
    pub recommender: RecommenderConfig,
    pub selection: SelectionConfig,
    pub feedback: FeedbackConfig,
    pub variants: Vec<VariantSpec>,
    /// One A/B replicate per seed; the world seed lives in `world.seed`.
    pub sim_seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            warmup: WarmupConfig::default(),
            train: TrainConfig { dim: 32, ..TrainConfig::default() },
            invr: InvrConfig::default(),
            slate: SlateConfig::default(),
            recommender: RecommenderConfig::default(),
            selection: SelectionConfig::default(),
            feedback: FeedbackConfig::default(),
            variants: VariantName::ALL.into_iter().map(VariantSpec::new).collect(),
            sim_seeds: vec![1, 2, 3],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { String::new() } else { key };
            ConfigError::Parse { key, message: e.into_inner().to_string() }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.world.validate().map_err(|e| invalid(&e))?;
        self.warmup.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        self.invr.validate().map_err(|e| invalid(&e))?;
        self.slate.validate().map_err(|e| invalid(&e))?;
        self.recommender.validate(self.slate.slate_size).map_err(|e| invalid(&e))?;
        self.selection.validate().map_err(|e| invalid(&e))?;
        self.feedback.validate().map_err(|e| invalid(&e))?;
        for v in &self.variants {
            v.invr_config(&self.invr).validate().map_err(|e| ConfigError::Invalid(format!("variant {}: {e}", v.name)))?;
        }
        if self.sim_seeds.is_empty() {
            return Err(ConfigError::Invalid("sim_seeds must not be empty".into()));
        }
        if self.world.n_items < self.slate.slate_size {
            return Err(ConfigError::Invalid("world.n_items must be at least slate.slate_size".into()));
        }
        Ok(())
    }

    pub fn variant(&self, name: VariantName) -> VariantSpec {
        self.variants.iter().find(|v| v.name == name).cloned().unwrap_or_else(|| VariantSpec::new(name))
    }
}
