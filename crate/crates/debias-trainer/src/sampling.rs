use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::ChaCha8Rng;
use synthcohort::streams::substream_rng;

use crate::TrainError;

/// Composite class- and patient-balancing weights.
///
/// w_i = 1 / (T_u(i) * P_c(i)) with T_u the tile count of tile i's patient
/// and P_c the patient count of its class, normalized to sum 1. Sampling
/// with these weights is class-balanced and patient-balanced within class in
/// expectation.
pub fn composite_weights(
    patient_of: &[usize],
    class_of: &[usize],
) -> Result<Vec<f64>, TrainError> {
    if patient_of.is_empty() || patient_of.len() != class_of.len() {
        return Err(TrainError::EmptyInput(format!(
            "{} patient entries vs {} class entries",
            patient_of.len(),
            class_of.len()
        )));
    }
    let n_patients = patient_of.iter().max().unwrap() + 1;
    let n_classes = class_of.iter().max().unwrap() + 1;
    let mut tiles_per_patient = vec![0usize; n_patients];
    let mut class_of_patient = vec![usize::MAX; n_patients];
    for (&u, &c) in patient_of.iter().zip(class_of.iter()) {
        tiles_per_patient[u] += 1;
        class_of_patient[u] = c;
    }
    let mut patients_per_class = vec![0usize; n_classes];
    for &c in class_of_patient.iter().filter(|&&c| c != usize::MAX) {
        patients_per_class[c] += 1;
    }

    let mut weights: Vec<f64> = patient_of
        .iter()
        .zip(class_of.iter())
        .map(|(&u, &c)| 1.0 / (tiles_per_patient[u] as f64 * patients_per_class[c] as f64))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Weighted sampling with replacement from a seeded stream; each call to
/// [`BatchSampler::next_batch`] yields `batch_size` tile indices.
pub struct BatchSampler {
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    batch_size: usize,
}

impl BatchSampler {
    pub fn new(weights: &[f64], batch_size: usize, seed: u64) -> Result<Self, TrainError> {
        let dist = WeightedIndex::new(weights)
            .map_err(|e| TrainError::EmptyInput(format!("bad weights: {e}")))?;
        Ok(BatchSampler {
            dist,
            rng: substream_rng(seed, "batch_sampler", 0),
            batch_size,
        })
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        (0..self.batch_size)
            .map(|_| self.dist.sample(&mut self.rng))
            .collect()
    }
}
