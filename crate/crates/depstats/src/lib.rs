//! Statistical dependence and projection primitives.
//!
//! Provides the squared distance correlation used to audit learned features
//! against protected variables, the squared Pearson correlation underlying the
//! adversarial bias losses, one-hot encoding of categorical variables, and a
//! deterministic PCA for diagnostic projections.

mod dc;
mod encode;
mod pca;

pub use dc::{
    categorical_distance_correlation_sq, distance_correlation_sq, distance_correlation_sq_capped,
    pearson_corr_sq, DcValue,
};
pub use encode::one_hot;
pub use pca::{pca_project, Pca};

use thiserror::Error;

/// Default row cap for the O(n^2) distance-matrix path; larger inputs are
/// uniformly subsampled with a recorded seed.
pub const DEFAULT_DC_CAP: usize = 8192;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label {label} out of range for {categories} categories")]
    LabelRange { label: usize, categories: usize },
}
