use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use radfed_core::fed::TrainingConfig;
use radfed_core::ResidualCnnConfig;
use radfed_signal::DatasetConfig;
use serde::{Deserialize, Serialize};

/// Frames per subcategory for the full-size dataset.
pub const FULL_SCALE_FRAMES_PER_SUBCAT: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory used when `--out` is not given.
    pub dir: PathBuf,
    pub checkpoints: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs"), checkpoints: true }
    }
}

/// Everything a command needs, loaded from one TOML file. Missing sections
/// and keys take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ResidualCnnConfig,
    pub training: TrainingConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing experiment config")
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        let render = &self.dataset.channel.render;
        if render.channels != self.model.input_channels {
            bail!(
                "dataset renders {} channels but the model expects {}",
                render.channels,
                self.model.input_channels
            );
        }
        Ok(())
    }

    pub fn apply_full_scale(&mut self) {
        self.dataset.frames_per_subcat = FULL_SCALE_FRAMES_PER_SUBCAT;
    }
}
