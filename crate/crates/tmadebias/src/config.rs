use std::path::Path;

use debias_trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use stainprep::PreprocessConfig;
use synthcohort::CohortSpec;

use crate::errors::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub prevalence: f64,
    pub threshold: f64,
    pub confidence: f64,
    /// Row cap for the diagnostic PCA scatter.
    pub pca_cap: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            prevalence: clinmetrics::DEFAULT_PREVALENCE,
            threshold: 0.5,
            confidence: 0.95,
            pca_cap: 2000,
        }
    }
}

/// One JSON document configures a whole run; every section has defaults and
/// unknown keys are rejected. The resolved document is materialized into the
/// output directory so runs are self-describing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides both the cohort and training seeds when set.
    pub seed: Option<u64>,
    pub cohort: CohortSpec,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub preprocess: PreprocessConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::NotFound {
                        CliError::missing(format!("config file {} not found", p.display()))
                    } else {
                        CliError::from(e)
                    }
                })?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::config(format!("config error in {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = config.seed {
            config.cohort.seed = seed;
            config.train.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(seed) = seed {
            self.seed = Some(seed);
            self.cohort.seed = seed;
            self.train.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.cohort.validate()?;
        self.train.validate()?;
        let m = &self.metrics;
        if !(0.0..=1.0).contains(&m.prevalence) {
            return Err(CliError::config(format!(
                "metrics.prevalence {} outside [0, 1]",
                m.prevalence
            )));
        }
        if !(0.0 < m.confidence && m.confidence < 1.0) {
            return Err(CliError::config(format!(
                "metrics.confidence {} outside (0, 1)",
                m.confidence
            )));
        }
        if !(0.0..=1.0).contains(&m.threshold) {
            return Err(CliError::config(format!(
                "metrics.threshold {} outside [0, 1]",
                m.threshold
            )));
        }
        if m.pca_cap < 2 {
            return Err(CliError::config("metrics.pca_cap must be at least 2".to_string()));
        }
        Ok(())
    }
}

/// Write a file via a temp sibling and rename, keeping outputs atomic.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
