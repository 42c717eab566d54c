//! Statistical checks that the planted effects actually land in the payloads.

use depstats::{distance_correlation_sq_capped, one_hot};
use ndarray::Array2;
use synthcohort::{generate_cohort, Amplitudes, CohortSpec, TilePayload};

fn payload_matrix(cohort: &synthcohort::Cohort) -> Array2<f64> {
    let dim = cohort.spec.feature_dim;
    let mut m = Array2::zeros((cohort.tiles.len(), dim));
    for (i, t) in cohort.tiles.iter().enumerate() {
        if let TilePayload::Features(v) = &t.payload {
            for (j, x) in v.iter().enumerate() {
                m[[i, j]] = *x as f64;
            }
        }
    }
    m
}

fn project_labels(cohort: &synthcohort::Cohort) -> Vec<usize> {
    let ids: Vec<&str> = cohort.spec.projects.iter().map(|p| p.id.as_str()).collect();
    cohort
        .tiles
        .iter()
        .map(|t| ids.iter().position(|&p| p == t.project_id).unwrap())
        .collect()
}

fn spec_with_project_amp(alpha_project: f64) -> CohortSpec {
    CohortSpec {
        n_patients: 400,
        msi_rate: 0.2,
        amplitudes: Amplitudes {
            class: 2.0,
            project: alpha_project,
            patient: 0.0,
            glass: 0.0,
            noise: 1.0,
        },
        spots_per_patient: 2,
        tiles_per_spot: 3,
        seed: 13,
        ..CohortSpec::default()
    }
}

#[test]
fn unconfounded_class_signal_leaves_project_independent() {
    let spec = spec_with_project_amp(0.0);
    let cohort = generate_cohort(&spec).unwrap();
    assert!(cohort.tiles.len() >= 2000);
    let x = payload_matrix(&cohort);
    let b = one_hot(&project_labels(&cohort), spec.projects.len()).unwrap();
    let dc = distance_correlation_sq_capped(&x, &b, 2048, 1).unwrap();
    assert!(dc.value < 0.05, "project dc = {}", dc.value);
}

#[test]
fn project_dc_grows_with_planted_amplitude() {
    let mut values = Vec::new();
    for alpha in [0.0, 1.0, 4.0] {
        let spec = spec_with_project_amp(alpha);
        let cohort = generate_cohort(&spec).unwrap();
        assert!(cohort.tiles.len() >= 2000);
        let x = payload_matrix(&cohort);
        let b = one_hot(&project_labels(&cohort), spec.projects.len()).unwrap();
        values.push(distance_correlation_sq_capped(&x, &b, 2048, 1).unwrap().value);
    }
    assert!(
        values[0] < values[1] && values[1] < values[2],
        "dc not strictly increasing: {values:?}"
    );
}
