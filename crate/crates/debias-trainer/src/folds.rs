use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use synthcohort::streams::substream_rng;
use synthcohort::ClassLabel;

use crate::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train_patients: Vec<String>,
    pub validation_patients: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// Patient-grouped, class-stratified folds: within each class, patients are
/// shuffled (seeded) and dealt round-robin into the validation buckets.
pub fn split_folds(
    patients: &[(String, ClassLabel)],
    folds: usize,
    seed: u64,
) -> Result<FoldPlan, TrainError> {
    if folds < 2 {
        return Err(TrainError::Stratification(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (id, label) in patients {
        by_class.entry(label.index()).or_default().push(id);
    }
    for (class, members) in &by_class {
        if members.len() < folds {
            return Err(TrainError::Stratification(format!(
                "class {class} has {} patients, fewer than {folds} folds",
                members.len()
            )));
        }
    }

    let mut buckets: Vec<Vec<String>> = vec![Vec::new(); folds];
    for (class, mut members) in by_class {
        members.sort_unstable();
        let mut rng = substream_rng(seed, "fold_split", class as u64);
        members.shuffle(&mut rng);
        for (i, id) in members.into_iter().enumerate() {
            buckets[i % folds].push(id.to_string());
        }
    }

    let all: Vec<String> = patients.iter().map(|(id, _)| id.clone()).collect();
    let plan = FoldPlan {
        folds: (0..folds)
            .map(|i| {
                let mut validation = buckets[i].clone();
                validation.sort_unstable();
                let mut train: Vec<String> = all
                    .iter()
                    .filter(|id| !validation.contains(id))
                    .cloned()
                    .collect();
                train.sort_unstable();
                train.dedup();
                Fold {
                    train_patients: train,
                    validation_patients: validation,
                }
            })
            .collect(),
    };
    Ok(plan)
}
