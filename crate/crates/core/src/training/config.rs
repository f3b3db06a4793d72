use serde::{Deserialize, Serialize};

use crate::config::{fmt_f64, parse_value, KeyValueConfig};
use crate::error::{Error, Result};
use crate::ingest::InputSpec;
use crate::networks::ArchConfig;
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchPreset {
    Full,
    Desk,
}

impl ArchPreset {
    fn name(self) -> &'static str {
        match self {
            ArchPreset::Full => "full",
            ArchPreset::Desk => "desk",
        }
    }
}

/// Hyperparameters of both training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub preset: ArchPreset,
    pub arch: ArchConfig,
    pub input: InputSpec,
    pub batch_size: usize,
    pub source_epochs: usize,
    pub adapt_iterations: usize,
    pub lr_source: f64,
    pub lr_discriminator: f64,
    pub lr_target: f64,
    pub lr_head: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub epsilon: f64,
    pub pair_batch_size: usize,
    pub positive_pair_fraction: f64,
    pub split_ratio: f64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            preset: ArchPreset::Full,
            arch: ArchConfig::full(),
            input: InputSpec::default(),
            batch_size: 32,
            source_epochs: 30,
            adapt_iterations: 2000,
            lr_source: 1e-4,
            lr_discriminator: 1e-4,
            lr_target: 1e-5,
            lr_head: 1e-4,
            adam: AdamConfig::default(),
            seed: 0,
            epsilon: crate::losses::EPSILON,
            pair_batch_size: 32,
            positive_pair_fraction: 0.5,
            split_ratio: 0.8,
            validation_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    /// Defaults with the scaled-down architecture and 64 -> 56 inputs.
    pub fn desk() -> Self {
        let mut c = TrainConfig::default();
        c.apply_preset(ArchPreset::Desk);
        c
    }

    fn apply_preset(&mut self, preset: ArchPreset) {
        self.preset = preset;
        match preset {
            ArchPreset::Full => {
                self.arch = ArchConfig::full();
                self.input = InputSpec::default();
            }
            ArchPreset::Desk => {
                self.arch = ArchConfig::desk();
                self.input = InputSpec::desk();
            }
        }
    }

    pub fn adam(&self) -> AdamConfig {
        self.adam
    }
}

impl KeyValueConfig for TrainConfig {
    const KEYS: &'static [&'static str] = &[
        "arch",
        "feature_dim",
        "input_resize",
        "batch_size",
        "source_epochs",
        "adapt_iterations",
        "lr_source",
        "lr_discriminator",
        "lr_target",
        "lr_head",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "seed",
        "epsilon",
        "pair_batch_size",
        "positive_pair_fraction",
        "split_ratio",
        "validation_fraction",
    ];
    const FIRST: &'static [&'static str] = &["arch"];

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "arch" => {
                let preset = match value {
                    "full" => ArchPreset::Full,
                    "desk" => ArchPreset::Desk,
                    _ => return Err(Error::config(key, format!("expected `full` or `desk`, got `{value}`"))),
                };
                self.apply_preset(preset);
            }
            "feature_dim" => {
                let f: usize = parse_value(key, value)?;
                if f == 0 {
                    return Err(Error::config(key, "must be positive"));
                }
                self.arch = self.arch.clone().with_feature_dim(f);
            }
            "input_resize" => self.input.resize = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "source_epochs" => self.source_epochs = parse_value(key, value)?,
            "adapt_iterations" => self.adapt_iterations = parse_value(key, value)?,
            "lr_source" => self.lr_source = parse_value(key, value)?,
            "lr_discriminator" => self.lr_discriminator = parse_value(key, value)?,
            "lr_target" => self.lr_target = parse_value(key, value)?,
            "lr_head" => self.lr_head = parse_value(key, value)?,
            "adam_beta1" => self.adam.beta1 = parse_value(key, value)?,
            "adam_beta2" => self.adam.beta2 = parse_value(key, value)?,
            "adam_eps" => self.adam.eps = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "pair_batch_size" => self.pair_batch_size = parse_value(key, value)?,
            "positive_pair_fraction" => self.positive_pair_fraction = parse_value(key, value)?,
            "split_ratio" => self.split_ratio = parse_value(key, value)?,
            "validation_fraction" => self.validation_fraction = parse_value(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "arch" => self.preset.name().to_string(),
            "feature_dim" => self.arch.feature_dim().to_string(),
            "input_resize" => self.input.resize.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "source_epochs" => self.source_epochs.to_string(),
            "adapt_iterations" => self.adapt_iterations.to_string(),
            "lr_source" => fmt_f64(self.lr_source),
            "lr_discriminator" => fmt_f64(self.lr_discriminator),
            "lr_target" => fmt_f64(self.lr_target),
            "lr_head" => fmt_f64(self.lr_head),
            "adam_beta1" => fmt_f64(self.adam.beta1),
            "adam_beta2" => fmt_f64(self.adam.beta2),
            "adam_eps" => fmt_f64(self.adam.eps),
            "seed" => self.seed.to_string(),
            "epsilon" => fmt_f64(self.epsilon),
            "pair_batch_size" => self.pair_batch_size.to_string(),
            "positive_pair_fraction" => fmt_f64(self.positive_pair_fraction),
            "split_ratio" => fmt_f64(self.split_ratio),
            "validation_fraction" => fmt_f64(self.validation_fraction),
            _ => String::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.input.validate()?;
        if self.input.crop as usize != self.arch.input_size {
            return Err(Error::config("input_resize", "crop size must equal the network input size"));
        }
        if self.input.resize < self.input.crop {
            return Err(Error::config("input_resize", format!("must be at least {}", self.input.crop)));
        }
        for (k, v) in [
            ("batch_size", self.batch_size),
            ("source_epochs", self.source_epochs),
            ("pair_batch_size", self.pair_batch_size),
        ] {
            if v == 0 {
                return Err(Error::config(k, "must be positive"));
            }
        }
        for (k, v) in [
            ("lr_source", self.lr_source),
            ("lr_discriminator", self.lr_discriminator),
            ("lr_target", self.lr_target),
            ("lr_head", self.lr_head),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(k, "must be finite and non-negative"));
            }
        }
        for (k, v) in [("adam_beta1", self.adam.beta1), ("adam_beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(k, "must lie in [0, 1)"));
            }
        }
        if !(self.adam.eps > 0.0) {
            return Err(Error::config("adam_eps", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::config("epsilon", "must lie in (0, 0.5)"));
        }
        for (k, v) in [
            ("positive_pair_fraction", self.positive_pair_fraction),
            ("split_ratio", self.split_ratio),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(k, "must lie in (0, 1)"));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }
}
