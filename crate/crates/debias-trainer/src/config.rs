use neuralcore::OptimizerKind;
use serde::{Deserialize, Serialize};
use stainprep::AugmentConfig;
use synthcohort::ClassLabel;

use crate::TrainError;

/// Protected variables the trainer knows how to read off a manifest.
pub const KNOWN_BIASES: [&str; 3] = ["project", "patient", "glass"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub fe_hidden: Vec<usize>,
    /// Output width of the feature extractor (d_f).
    pub feature_dim: usize,
    pub head_hidden: Vec<usize>,
    /// Image payloads are resized to this square size and flattened.
    pub image_input_px: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            fe_hidden: vec![64],
            feature_dim: 64,
            head_hidden: vec![32],
            image_input_px: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Adversarial weight on the bias losses.
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_task: f64,
    pub lr_be: f64,
    pub lr_adv: f64,
    pub folds: usize,
    /// Class the adversarial phases condition on.
    pub conditioning_class: ClassLabel,
    pub bias_names: Vec<String>,
    /// Record history every this many batches.
    pub monitor_every: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Update rule for the phase-3 ascent into the extractor. Plain gradient
    /// steps keep the ascent proportional to the measured correlation, so an
    /// absent bias cannot inject adaptive-moment noise into the features.
    pub adv_optimizer: OptimizerKind,
    /// Run phases 2-3 on the full batch instead of the conditioned rows.
    pub adv_on_full_batch: bool,
    /// Optional early-stopping patience on validation loss (epochs).
    pub patience: Option<usize>,
    /// Row cap for dependence estimates in audits.
    pub dc_cap: usize,
    pub model: ModelConfig,
    /// Augmentation for image payloads; feature vectors ignore it.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            batch_size: 128,
            epochs: 3,
            lr_task: 1e-3,
            // the adversarial phases see few desk-scale iterations, so the
            // bias heads and the plain-gradient ascent run hotter than the
            // task path
            lr_be: 2e-2,
            lr_adv: 0.5,
            folds: 5,
            conditioning_class: ClassLabel::Mss,
            bias_names: KNOWN_BIASES.iter().map(|s| s.to_string()).collect(),
            monitor_every: 10,
            seed: 0,
            optimizer: OptimizerKind::default(),
            adv_optimizer: OptimizerKind::Sgd { momentum: 0.0 },
            adv_on_full_batch: false,
            patience: None,
            dc_cap: 2048,
            model: ModelConfig::default(),
            augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if self.folds < 2 {
            return Err(TrainError::Config(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(TrainError::Config(format!("lambda {} invalid", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.monitor_every == 0 {
            return Err(TrainError::Config("monitor_every must be positive".into()));
        }
        if self.dc_cap < 2 {
            return Err(TrainError::Config("dc_cap must be at least 2".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.bias_names {
            if !KNOWN_BIASES.contains(&name.as_str()) {
                return Err(TrainError::Config(format!(
                    "unknown bias '{name}' (known: {KNOWN_BIASES:?})"
                )));
            }
            if !seen.insert(name) {
                return Err(TrainError::Config(format!("duplicate bias '{name}'")));
            }
        }
        for (what, lr) in [
            ("lr_task", self.lr_task),
            ("lr_be", self.lr_be),
            ("lr_adv", self.lr_adv),
        ] {
            if lr < 0.0 || !lr.is_finite() {
                return Err(TrainError::Config(format!("{what} {lr} invalid")));
            }
        }
        if self.model.feature_dim == 0 {
            return Err(TrainError::Config("feature_dim must be positive".into()));
        }
        Ok(())
    }

    /// Stable hash of the resolved config, stored in checkpoint sidecars.
    pub fn content_hash(&self) -> String {
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let mut h = DefaultHasher::new();
        serde_json::to_string(self).expect("config serializes").hash(&mut h);
        format!("{:016x}", h.finish())
    }
}
