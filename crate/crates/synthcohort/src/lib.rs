//! Synthetic cohorts with planted, controllable batch effects.
//!
//! Generates tile populations carrying a class signal plus project, patient
//! and glass effects, either as feature vectors or as tiny stained spot
//! images, and round-trips them through a CSV manifest + binary payload (or
//! PNG tile) layout.

mod generate;
mod image_mode;
mod manifest;
mod records;
mod spec;
pub mod streams;

pub use generate::{generate_cohort, Cohort, Directions, PatientInfo};
pub use image_mode::{render_spot_image, SpotRender, TissueMask, DISK_RADIUS, SPOT_SIZE, TILE_PX};
pub use manifest::{load_cohort, load_manifest, save_cohort, save_manifest, Manifest, PayloadStore};
pub use records::{ClassLabel, Magnification, TilePayload, TileRecord, TissueType};
pub use spec::{Amplitudes, CohortMode, CohortSpec, ProjectSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid cohort spec: {0}")]
    Config(String),
    #[error("degenerate cohort: {0}")]
    DegenerateCohort(String),
    #[error("empty cohort: no tiles generated")]
    EmptyCohort,
    #[error("manifest line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },
    #[error("unknown id: {0}")]
    UnknownId(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}
