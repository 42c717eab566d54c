use serde::{Deserialize, Serialize};

use crate::SynthError;

/// One project with its per-class patient assignment probabilities. Across
/// the project list, probabilities must sum to 1 for each class; skew between
/// the two columns is what plants project/class confounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSpec {
    pub id: String,
    pub prob_mss: f64,
    pub prob_msi: f64,
}

/// Effect amplitudes of the planted signal components and the noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitudes {
    pub class: f64,
    pub project: f64,
    pub patient: f64,
    pub glass: f64,
    pub noise: f64,
}

impl Default for Amplitudes {
    fn default() -> Self {
        Amplitudes {
            class: 1.0,
            project: 1.0,
            patient: 0.5,
            glass: 0.5,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohortMode {
    FeatureVector,
    SpotImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub msi_rate: f64,
    pub projects: Vec<ProjectSpec>,
    pub glasses_per_project: usize,
    pub single_class_glasses: bool,
    pub spots_per_patient: usize,
    pub tiles_per_spot: usize,
    pub feature_dim: usize,
    pub amplitudes: Amplitudes,
    pub mode: CohortMode,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_patients: 100,
            msi_rate: 0.074,
            projects: vec![
                ProjectSpec {
                    id: "PRJ-A".into(),
                    prob_mss: 0.5,
                    prob_msi: 0.5,
                },
                ProjectSpec {
                    id: "PRJ-B".into(),
                    prob_mss: 0.5,
                    prob_msi: 0.5,
                },
            ],
            glasses_per_project: 4,
            single_class_glasses: false,
            spots_per_patient: 2,
            tiles_per_spot: 3,
            feature_dim: 32,
            amplitudes: Amplitudes::default(),
            mode: CohortMode::FeatureVector,
            seed: 0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_patients < 2 {
            return Err(SynthError::Config(format!(
                "n_patients must be at least 2, got {}",
                self.n_patients
            )));
        }
        if !(self.msi_rate > 0.0 && self.msi_rate < 1.0) {
            return Err(SynthError::Config(format!(
                "msi_rate must lie in (0, 1), got {}",
                self.msi_rate
            )));
        }
        if self.projects.is_empty() {
            return Err(SynthError::Config("projects must be non-empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.projects {
            if !seen.insert(&p.id) {
                return Err(SynthError::Config(format!("duplicate project id '{}'", p.id)));
            }
            if p.prob_mss < 0.0 || p.prob_msi < 0.0 {
                return Err(SynthError::Config(format!(
                    "negative assignment probability for project '{}'",
                    p.id
                )));
            }
        }
        let sum_mss: f64 = self.projects.iter().map(|p| p.prob_mss).sum();
        let sum_msi: f64 = self.projects.iter().map(|p| p.prob_msi).sum();
        if (sum_mss - 1.0).abs() > 1e-9 || (sum_msi - 1.0).abs() > 1e-9 {
            return Err(SynthError::Config(format!(
                "project probabilities must sum to 1 per class (MSS {sum_mss}, MSI-H {sum_msi})"
            )));
        }
        if self.glasses_per_project == 0 {
            return Err(SynthError::Config("glasses_per_project must be positive".into()));
        }
        if self.spots_per_patient == 0 {
            return Err(SynthError::Config("spots_per_patient must be positive".into()));
        }
        if self.tiles_per_spot == 0 {
            return Err(SynthError::Config("tiles_per_spot must be positive".into()));
        }
        let a = &self.amplitudes;
        if a.class < 0.0 || a.project < 0.0 || a.patient < 0.0 || a.glass < 0.0 {
            return Err(SynthError::Config("amplitudes must be non-negative".into()));
        }
        if a.noise <= 0.0 {
            return Err(SynthError::Config(format!(
                "noise sigma must be positive, got {}",
                a.noise
            )));
        }
        if self.feature_dim == 0 {
            return Err(SynthError::Config("feature_dim must be positive".into()));
        }
        Ok(())
    }
}
