use std::collections::BTreeMap;

use image::RgbImage;
use ndarray::Array2;
use neuralcore::Batch;
use stainprep::{augment, resize_tile, AugmentConfig};
use synthcohort::streams::substream_seed;
use synthcohort::{TilePayload, TileRecord};

use crate::config::ModelConfig;
use crate::TrainError;

enum Inputs {
    /// Feature-vector payloads, one row per tile.
    Matrix(Array2<f64>),
    /// Image payloads pre-resized to the model input size.
    Images(Vec<RgbImage>),
}

/// A manifest materialized for training: payloads, class labels, bias
/// category codes (with whole-cohort cardinalities) and tile metadata.
pub struct TileDataset {
    inputs: Inputs,
    pub feature_dim: usize,
    pub labels: Vec<usize>,
    pub bias_names: Vec<String>,
    pub bias_codes: Vec<Vec<usize>>,
    pub bias_cardinalities: Vec<usize>,
    pub bias_categories: Vec<Vec<String>>,
    pub patient_ids: Vec<String>,
    pub tile_ids: Vec<String>,
    pub tissues: Vec<String>,
    pub magnifications: Vec<String>,
}

fn code_map(values: impl Iterator<Item = String>) -> (Vec<String>, BTreeMap<String, usize>) {
    let distinct: std::collections::BTreeSet<String> = values.collect();
    let categories: Vec<String> = distinct.into_iter().collect();
    let map = categories
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), i))
        .collect();
    (categories, map)
}

impl TileDataset {
    /// Build a dataset from manifest records. Bias categories are coded over
    /// the whole manifest so head widths stay fixed across folds.
    pub fn from_records(
        tiles: &[TileRecord],
        bias_names: &[String],
        model: &ModelConfig,
    ) -> Result<Self, TrainError> {
        if tiles.is_empty() {
            return Err(TrainError::EmptyInput("manifest has no tiles".into()));
        }
        let labels: Vec<usize> = tiles.iter().map(|t| t.label.index()).collect();

        let mut bias_codes = Vec::new();
        let mut bias_cardinalities = Vec::new();
        let mut bias_categories = Vec::new();
        for name in bias_names {
            let value_of = |t: &TileRecord| -> String {
                match name.as_str() {
                    "project" => t.project_id.clone(),
                    "patient" => t.patient_id.clone(),
                    "glass" => t.glass_id.clone(),
                    other => unreachable!("bias '{other}' passed validation"),
                }
            };
            let (categories, map) = code_map(tiles.iter().map(value_of));
            bias_codes.push(tiles.iter().map(|t| map[&value_of(t)]).collect());
            bias_cardinalities.push(categories.len());
            bias_categories.push(categories);
        }

        let all_features = tiles
            .iter()
            .all(|t| matches!(t.payload, TilePayload::Features(_)));
        let (inputs, feature_dim) = if all_features {
            let dim = match &tiles[0].payload {
                TilePayload::Features(v) => v.len(),
                _ => unreachable!(),
            };
            let mut m = Array2::zeros((tiles.len(), dim));
            for (i, t) in tiles.iter().enumerate() {
                let TilePayload::Features(v) = &t.payload else {
                    unreachable!()
                };
                if v.len() != dim {
                    return Err(TrainError::Config(format!(
                        "tile {} has {} features, expected {dim}",
                        t.tile_id,
                        v.len()
                    )));
                }
                for (j, x) in v.iter().enumerate() {
                    m[[i, j]] = *x as f64;
                }
            }
            (Inputs::Matrix(m), dim)
        } else {
            let px = model.image_input_px;
            let mut images = Vec::with_capacity(tiles.len());
            for t in tiles {
                let TilePayload::Rgb {
                    width,
                    height,
                    data,
                } = &t.payload
                else {
                    return Err(TrainError::Config(format!(
                        "tile {} mixes payload kinds within one manifest",
                        t.tile_id
                    )));
                };
                let img = RgbImage::from_raw(*width, *height, data.clone()).ok_or_else(|| {
                    TrainError::Config(format!("tile {}: inconsistent image dims", t.tile_id))
                })?;
                images.push(resize_tile(&img, px)?);
            }
            (Inputs::Images(images), (px * px * 3) as usize)
        };

        Ok(TileDataset {
            inputs,
            feature_dim,
            labels,
            bias_names: bias_names.to_vec(),
            bias_codes,
            bias_cardinalities,
            bias_categories,
            patient_ids: tiles.iter().map(|t| t.patient_id.clone()).collect(),
            tile_ids: tiles.iter().map(|t| t.tile_id.clone()).collect(),
            tissues: tiles.iter().map(|t| t.tissue.to_string()).collect(),
            magnifications: tiles.iter().map(|t| t.magnification.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Tile indices whose patient is in the given set.
    pub fn indices_for_patients(&self, patients: &[String]) -> Vec<usize> {
        let set: std::collections::HashSet<&str> = patients.iter().map(|s| s.as_str()).collect();
        (0..self.len())
            .filter(|&i| set.contains(self.patient_ids[i].as_str()))
            .collect()
    }

    /// Unique (patient, class) pairs in id order.
    pub fn patients(&self) -> Vec<(String, synthcohort::ClassLabel)> {
        let mut map: BTreeMap<&str, usize> = BTreeMap::new();
        for (id, &label) in self.patient_ids.iter().zip(self.labels.iter()) {
            map.entry(id).or_insert(label);
        }
        map.into_iter()
            .map(|(id, l)| {
                (
                    id.to_string(),
                    synthcohort::ClassLabel::from_index(l).expect("binary label"),
                )
            })
            .collect()
    }

    fn row_features(&self, idx: usize, aug: Option<(&AugmentConfig, u64)>) -> Vec<f64> {
        match &self.inputs {
            Inputs::Matrix(m) => m.row(idx).to_vec(),
            Inputs::Images(images) => {
                let img = match aug {
                    Some((cfg, seed)) => augment(&images[idx], cfg, seed),
                    None => images[idx].clone(),
                };
                img.pixels()
                    .flat_map(|p| p.0.into_iter())
                    .map(|v| v as f64 / 255.0)
                    .collect()
            }
        }
    }

    /// Materialize a batch. `augment_seed`, when set, keys the per-slot
    /// augmentation streams (image payloads only).
    pub fn gather(
        &self,
        idx: &[usize],
        augment_cfg: Option<&AugmentConfig>,
        augment_seed: Option<u64>,
    ) -> Batch {
        let mut inputs = Array2::zeros((idx.len(), self.feature_dim));
        for (row, &i) in idx.iter().enumerate() {
            let aug = match (augment_cfg, augment_seed) {
                (Some(cfg), Some(seed)) => Some((cfg, substream_seed(seed, "slot", row as u64))),
                _ => None,
            };
            for (col, v) in self.row_features(i, aug).into_iter().enumerate() {
                inputs[[row, col]] = v;
            }
        }
        Batch {
            inputs,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            bias_values: self
                .bias_codes
                .iter()
                .map(|codes| idx.iter().map(|&i| codes[i]).collect())
                .collect(),
            tile_ids: idx.iter().map(|&i| self.tile_ids[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use synthcohort::{generate_cohort, CohortSpec};

    fn dataset() -> TileDataset {
        let spec = CohortSpec {
            n_patients: 10,
            msi_rate: 0.3,
            seed: 2,
            ..CohortSpec::default()
        };
        let cohort = generate_cohort(&spec).unwrap();
        TileDataset::from_records(
            &cohort.tiles,
            &["project".into(), "patient".into(), "glass".into()],
            &ModelConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn cardinalities_cover_whole_manifest() {
        let ds = dataset();
        assert_eq!(ds.bias_cardinalities[0], 2);
        assert_eq!(ds.bias_cardinalities[1], 10);
        for (codes, &card) in ds.bias_codes.iter().zip(ds.bias_cardinalities.iter()) {
            assert!(codes.iter().all(|&c| c < card));
        }
    }

    #[test]
    fn gather_aligns_rows() {
        let ds = dataset();
        let batch = ds.gather(&[3, 0, 7], None, None);
        assert_eq!(batch.len(), 3);
        assert_eq!(batch.tile_ids[0], ds.tile_ids[3]);
        assert_eq!(batch.labels[1], ds.labels[0]);
        assert_eq!(batch.bias_values[1][2], ds.bias_codes[1][7]);
        batch.validate().unwrap();
    }

    #[test]
    fn patient_filter_selects_exactly_their_tiles() {
        let ds = dataset();
        let patients = ds.patients();
        let chosen = vec![patients[0].0.clone(), patients[3].0.clone()];
        let idx = ds.indices_for_patients(&chosen);
        assert!(!idx.is_empty());
        for i in idx {
            assert!(chosen.contains(&ds.patient_ids[i]));
        }
    }
}
