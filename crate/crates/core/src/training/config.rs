use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Everything that controls a training run. Unknown keys in a config file
/// are rejected; missing keys take the desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// The rate is divided by `decay_factor` every `decay_interval` steps.
    pub decay_interval: usize,
    pub decay_factor: f64,
    pub subgraph_size: usize,
    pub loss_vertex_count: usize,
    pub dropout_rate: f64,
    pub laplace_weight: f64,
    pub adam: AdamConfig,
    /// Validation runs every this many steps and after the last one.
    pub validation_interval: usize,
    /// Vertex budget per forward pass when predicting whole networks.
    pub eval_batch_vertices: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Short schedule that finishes on a laptop CPU.
    pub fn desk() -> Self {
        Self {
            iterations: 5_000,
            learning_rate: 1e-4,
            decay_interval: 1_500,
            decay_factor: 3.0,
            subgraph_size: 256,
            loss_vertex_count: 128,
            dropout_rate: 0.1,
            laplace_weight: 3.0,
            adam: AdamConfig::default(),
            validation_interval: 250,
            eval_batch_vertices: 2_048,
            seed: 0,
            model: ModelConfig::default(),
        }
    }

    /// The full-length schedule: 300k steps, decay every 30k.
    pub fn full() -> Self {
        Self {
            iterations: 300_000,
            decay_interval: 30_000,
            validation_interval: 5_000,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.loss_vertex_count == 0 || self.loss_vertex_count > self.subgraph_size {
            return bad("loss_vertex_count must be in 1..=subgraph_size");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.decay_interval == 0 || !(self.decay_factor >= 1.0 && self.decay_factor.is_finite()) {
            return bad("decay_interval must be positive and decay_factor at least 1");
        }
        if !(self.laplace_weight >= 0.0 && self.laplace_weight.is_finite()) {
            return bad("laplace_weight must be non-negative");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("adam betas must be in [0, 1) and epsilon positive");
        }
        if self.validation_interval == 0 || self.eval_batch_vertices == 0 {
            return bad("validation_interval and eval_batch_vertices must be positive");
        }
        self.model.validate()?;
        Ok(())
    }

    /// Step-decayed learning rate for 0-based iteration `it`.
    pub fn learning_rate_at(&self, it: usize) -> f64 {
        let decays = (it / self.decay_interval) as i32;
        self.learning_rate / self.decay_factor.powi(decays)
    }

    pub fn from_json_str(text: &str) -> Result<Self, TrainError> {
        let c: Self = serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TrainError> {
        let c: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let parsed = if is_toml { Self::from_toml_str(&text) } else { Self::from_json_str(&text) };
        parsed.map_err(|e| match e {
            TrainError::Config(msg) => TrainError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
