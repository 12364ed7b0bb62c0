//! Run configuration: a TOML file describing the dataset, the split, the
//! per-layer parameters, and the classifier.
//!
//! ```toml
//! dataset = "data/textures"
//! out_dir = "runs/demo"
//! seed = 42
//! train_per_class = 30
//!
//! [svm]
//! c = 1.0
//! epochs = 30
//!
//! [[layer]]
//! K = 64
//! alpha = 0.3
//! epochs = 4
//!
//! [[layer]]
//! K = 64
//! alpha = 0.3
//! epochs = 4
//! embed_dim = 96
//! sigma = 16.0
//! beta = 1.0
//! step = 0.05
//! ```
//!
//! Layer 1 consumes descriptors directly, so only deeper layers take the
//! embedding keys (`embed_dim`, `sigma`, `beta`, `step`, `pairs_per_image`).

use std::fs;
use std::path::{Path, PathBuf};

use deepsc_core::pipeline::{
    DescriptorParams, EmbedSpec, LayerSpec, TrainConfig, DICT_SAMPLE_CAP,
};
use serde::Deserialize;

use crate::error::{config_error, core_config, CmdError, CmdResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset root: one subdirectory per class.
    pub dataset: PathBuf,
    /// Where the model, logs, features, and reports land.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Images per class in the training split.
    pub train_per_class: usize,
    /// Images per class in the test split; all remaining when absent.
    #[serde(default)]
    pub test_per_class: Option<usize>,
    /// Evaluation runs, each with its own split seed.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Cap on vectors fed to each layer's dictionary learner.
    #[serde(default = "default_sample_cap")]
    pub dict_sample_cap: usize,
    #[serde(default)]
    pub descriptor: DescriptorSection,
    #[serde(default)]
    pub svm: SvmSection,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerSection>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("deepsc-out")
}

fn default_repeats() -> usize {
    1
}

fn default_sample_cap() -> usize {
    DICT_SAMPLE_CAP
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorSection {
    #[serde(default = "default_patch")]
    pub patch: u32,
    #[serde(default = "default_spacing")]
    pub spacing: u32,
}

impl Default for DescriptorSection {
    fn default() -> Self {
        DescriptorSection {
            patch: default_patch(),
            spacing: default_spacing(),
        }
    }
}

fn default_patch() -> u32 {
    16
}

fn default_spacing() -> u32 {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmSection {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_svm_epochs")]
    pub epochs: usize,
}

impl Default for SvmSection {
    fn default() -> Self {
        SvmSection {
            c: default_c(),
            epochs: default_svm_epochs(),
        }
    }
}

fn default_c() -> f64 {
    1.0
}

fn default_svm_epochs() -> usize {
    30
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    /// Dictionary size (number of atoms).
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    /// Sparsity penalty of the coding objective.
    pub alpha: f64,
    /// Passes over the data for dictionary (and embedding) training.
    #[serde(default = "default_layer_epochs")]
    pub epochs: usize,
    pub embed_dim: Option<usize>,
    pub sigma: Option<f64>,
    pub beta: Option<f64>,
    pub step: Option<f64>,
    pub pairs_per_image: Option<usize>,
}

fn default_layer_epochs() -> usize {
    5
}

const DEFAULT_BETA: f64 = 1.0;
const DEFAULT_STEP: f64 = 0.05;
const DEFAULT_PAIRS_PER_IMAGE: usize = 1000;

pub fn load_config(path: &Path) -> CmdResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_error!("cannot read {}: {e}", path.display()))?;
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| config_error!("{}: {e}", path.display()))?;
    config.check()?;
    Ok(config)
}

impl RunConfig {
    /// Structural checks beyond what serde enforces; chaining constraints are
    /// validated here so a bad config never reaches the compute stages.
    pub fn check(&self) -> CmdResult<()> {
        if self.repeats == 0 {
            return Err(config_error!("repeats must be at least 1"));
        }
        if !(self.svm.c > 0.0 && self.svm.c.is_finite()) {
            return Err(config_error!("svm.c must be positive, got {}", self.svm.c));
        }
        if self.svm.epochs == 0 {
            return Err(config_error!("svm.epochs must be at least 1"));
        }
        if self.test_per_class == Some(0) {
            return Err(config_error!("test_per_class must be at least 1 when set"));
        }
        self.train_config(self.seed).map(|_| ())
    }

    /// Lowers the layer sections into the pipeline's training config.
    pub fn train_config(&self, seed: u64) -> CmdResult<TrainConfig> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, section) in self.layers.iter().enumerate() {
            let n = i + 1;
            let embed = if i == 0 {
                let extras = [
                    section.embed_dim.is_some(),
                    section.sigma.is_some(),
                    section.beta.is_some(),
                    section.step.is_some(),
                    section.pairs_per_image.is_some(),
                ];
                if extras.iter().any(|&set| set) {
                    return Err(config_error!(
                        "layer 1 consumes descriptors directly and takes no embedding keys"
                    ));
                }
                None
            } else {
                let (Some(out_dim), Some(sigma)) = (section.embed_dim, section.sigma) else {
                    return Err(config_error!(
                        "layer {n} needs embed_dim and sigma to consume layer {i} codes"
                    ));
                };
                Some(EmbedSpec {
                    out_dim,
                    sigma,
                    beta: section.beta.unwrap_or(DEFAULT_BETA),
                    step_size: section.step.unwrap_or(DEFAULT_STEP),
                    pairs_per_image: section.pairs_per_image.unwrap_or(DEFAULT_PAIRS_PER_IMAGE),
                })
            };
            layers.push(LayerSpec {
                dict_size: section.k,
                alpha: section.alpha,
                epochs: section.epochs,
                embed,
            });
        }
        let config = TrainConfig {
            descriptor: DescriptorParams {
                patch_size: self.descriptor.patch,
                spacing: self.descriptor.spacing,
            },
            layers,
            dict_sample_cap: self.dict_sample_cap,
            seed,
            cache_codes: true,
        };
        config.validate().map_err(core_config)?;
        Ok(config)
    }
}

/// Applies command-line overrides; flags win over the file.
pub fn apply_overrides(config: &mut RunConfig, seed: Option<u64>, repeats: Option<usize>) -> CmdResult<()> {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(repeats) = repeats {
        if repeats == 0 {
            return Err(CmdError::Config("repeats must be at least 1".into()));
        }
        config.repeats = repeats;
    }
    Ok(())
}
