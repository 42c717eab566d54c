//! Spot image preprocessing: stain normalization, magnification pyramids,
//! non-overlapping tile extraction, tissue ROI filtering and training-time
//! augmentation.

mod augment;
mod macenko;
mod od;
mod pipeline;
mod pyramid;
mod tiles;

pub use augment::{augment, AugmentConfig};
pub use macenko::{
    average_profiles, estimate_stain_matrix, normalize_macenko, StainProfile, DEFAULT_ALPHA,
    DEFAULT_BETA,
};
pub use od::{od_to_rgb, rgb_to_od, OdImage};
pub use pipeline::{process_spot, PreprocessConfig, ProcessedTile};
pub use pyramid::{build_pyramid, PyramidLevel, TilePyramid};
pub use tiles::{derive_tile_labels, extract_tiles, filter_roi, resize_tile, GridTile};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StainError {
    #[error("size error: {0}")]
    Size(String),
    #[error("stain estimation failed: {0}")]
    Estimation(String),
    #[error("degenerate stain space: {0}")]
    DegenerateStain(String),
    #[error("metadata error: {0}")]
    Metadata(String),
}
