use std::collections::BTreeSet;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use synthcohort::{Magnification, TissueMask, TissueType};

use crate::macenko::{normalize_macenko, StainProfile};
use crate::pyramid::build_pyramid;
use crate::tiles::{derive_tile_labels, extract_tiles, filter_roi, resize_tile};
use crate::StainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub tile_px: u32,
    pub out_px: u32,
    pub keep: BTreeSet<TissueType>,
    pub od_beta: f64,
    pub angle_percentile: f64,
    pub normalize: bool,
    /// Optional second normalization pass against a cohort-level profile.
    pub cohort_profile: Option<StainProfile>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            tile_px: 128,
            out_px: 224,
            keep: [TissueType::Tum, TissueType::Lym, TissueType::Muc]
                .into_iter()
                .collect(),
            od_beta: crate::macenko::DEFAULT_BETA,
            angle_percentile: crate::macenko::DEFAULT_ALPHA,
            normalize: true,
            cohort_profile: None,
        }
    }
}

/// One pipeline output tile, ready for the manifest.
#[derive(Debug, Clone)]
pub struct ProcessedTile {
    pub magnification: Magnification,
    pub row: u32,
    pub col: u32,
    pub tissue: TissueType,
    pub image: RgbImage,
}

/// Run the full per-spot pipeline: stain normalization, pyramid, grid tiling,
/// background rejection, ROI filtering and resizing.
pub fn process_spot(
    spot: &RgbImage,
    mask: &TissueMask,
    target: &StainProfile,
    cfg: &PreprocessConfig,
) -> Result<Vec<ProcessedTile>, StainError> {
    let mut working = if cfg.normalize {
        normalize_macenko(spot, target)?
    } else {
        spot.clone()
    };
    if let Some(cohort_target) = &cfg.cohort_profile {
        working = normalize_macenko(&working, cohort_target)?;
    }

    let pyramid = build_pyramid(&working, cfg.tile_px)?;
    let mut out = Vec::new();
    for level in &pyramid.levels {
        let tiles = extract_tiles(&level.image, cfg.tile_px)?;
        if tiles.is_empty() {
            continue;
        }
        let labels = derive_tile_labels(&tiles, mask, level.scale, cfg.tile_px)?;
        for (tile, tissue) in filter_roi(tiles, &labels, &cfg.keep)? {
            out.push(ProcessedTile {
                magnification: level.magnification,
                row: tile.row,
                col: tile.col,
                tissue,
                image: resize_tile(&tile.image, cfg.out_px)?,
            });
        }
    }
    Ok(out)
}
