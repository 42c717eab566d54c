//! Minimal neural-network engine for adversarial bias-rejecting training.
//!
//! A configurable feed-forward feature extractor plus task and bias heads,
//! with hand-derived reverse-mode gradients, a cross-entropy task loss, a
//! squared-Pearson-correlation bias loss, and gradient descent/ascent steps.
//! Everything is f64 internally; checkpoints store f32 as the wire format.

mod bundle;
mod checkpoint;
mod loss;
mod mlp;
mod optim;

pub use bundle::{Batch, ModelBundle};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use loss::{corr_loss_grad, xent_loss_grad};
pub use mlp::{backward, forward, ForwardCache, Layer, MlpGrads, MlpParams};
pub use optim::{opt_step, OptState, OptimizerKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("stale forward cache: {0}")]
    StaleCache(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("sidecar error: {0}")]
    Json(#[from] serde_json::Error),
}
