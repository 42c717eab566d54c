//! Training orchestration: patient-grouped stratified folds, composite
//! weighted sampling, the baseline regime, the three-phase adversarial
//! bias-ablation regime with class-conditioned adversarial batches, per-batch
//! dependence monitoring, and the bias audit.

mod audit;
mod config;
mod data;
mod engine;
mod folds;
mod history;
mod rundir;
mod sampling;

pub use audit::{audit_biases, read_audit_csv, write_audit_csv, AuditRow};
pub use config::{ModelConfig, TrainConfig, KNOWN_BIASES};
pub use data::TileDataset;
pub use engine::{
    evaluation_loss, predict_scores, train_fold, EpochSnapshot, FoldResult, FoldTrainer, Regime,
    StepOutcome,
};
pub use folds::{split_folds, Fold, FoldPlan};
pub use history::{HistoryRow, TrainHistory};
pub use rundir::{
    execute_run, load_fold_plan, load_run_summary, RunSummary, AUDIT_FILE, CONFIG_FILE,
    FOLDS_FILE, META_FILE, SUMMARY_FILE,
};
pub use sampling::{composite_weights, BatchSampler};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("training diverged at iteration {iteration}: non-finite loss")]
    Diverged { iteration: usize },
    #[error(transparent)]
    Net(#[from] neuralcore::NetError),
    #[error(transparent)]
    Stats(#[from] depstats::StatsError),
    #[error(transparent)]
    Stain(#[from] stainprep::StainError),
    #[error(transparent)]
    Synth(#[from] synthcohort::SynthError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
