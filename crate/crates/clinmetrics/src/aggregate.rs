use std::collections::BTreeMap;

use serde::Serialize;

use crate::report::TilePrediction;
use crate::MetricsError;

/// Majority-vote decision for one patient. The vote fraction (share of tiles
/// predicted positive) doubles as the patient-level score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientPrediction {
    pub patient_id: String,
    pub true_label: usize,
    pub predicted_label: usize,
    pub vote_fraction: f64,
    pub n_tiles: usize,
}

/// Aggregate tile predictions to patient level by majority voting at the
/// given threshold. Exact ties resolve to the positive class.
pub fn aggregate_patient(
    preds: &[TilePrediction],
    threshold: f64,
) -> Result<Vec<PatientPrediction>, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Domain("no predictions".into()));
    }
    let mut by_patient: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for p in preds {
        let entry = by_patient.entry(&p.patient_id).or_insert((0, 0, p.true_label));
        if entry.2 != p.true_label {
            return Err(MetricsError::Domain(format!(
                "patient {} carries conflicting true labels",
                p.patient_id
            )));
        }
        entry.0 += 1;
        if p.score >= threshold {
            entry.1 += 1;
        }
    }
    Ok(by_patient
        .into_iter()
        .map(|(patient_id, (n_tiles, votes, true_label))| {
            let vote_fraction = votes as f64 / n_tiles as f64;
            PatientPrediction {
                patient_id: patient_id.to_string(),
                true_label,
                predicted_label: usize::from(vote_fraction >= 0.5),
                vote_fraction,
                n_tiles,
            }
        })
        .collect())
}
