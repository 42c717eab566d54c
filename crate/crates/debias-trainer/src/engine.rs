use depstats::{distance_correlation_sq, one_hot};
use ndarray::Array2;
use neuralcore::{
    backward, corr_loss_grad, forward, opt_step, xent_loss_grad, Batch, ModelBundle, OptState,
};
use synthcohort::streams::substream_seed;

use crate::config::TrainConfig;
use crate::data::TileDataset;
use crate::folds::Fold;
use crate::history::{HistoryRow, TrainHistory};
use crate::sampling::{composite_weights, BatchSampler};
use crate::TrainError;

/// Training regime: the baseline has no bias heads; the bias-ablated regime
/// runs the three-phase adversarial update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Baseline,
    BiasAblated,
}

/// Losses of one optimization step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub loss_msi: f64,
    /// Phase-2 loss per bias head; `None` when the phase was skipped.
    pub loss_be: Vec<Option<f64>>,
    /// Rows the adversarial phases saw (after class conditioning).
    pub adv_rows: usize,
    /// Features recomputed after the phase-1 update, when requested.
    pub features: Option<Array2<f64>>,
}

/// Per-epoch model snapshot with its validation loss.
#[derive(Debug, Clone)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub bundle: ModelBundle,
    pub validation_loss: f64,
}

#[derive(Debug)]
pub struct FoldResult {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    pub snapshots: Vec<EpochSnapshot>,
    pub epochs_run: usize,
}

/// Owns one fold's model and optimizer states and performs the per-batch
/// updates. Phase 2 updates only the bias heads; phase 3 ascends the bias
/// losses into the extractor through dedicated optimizer states.
pub struct FoldTrainer {
    pub bundle: ModelBundle,
    regime: Regime,
    config: TrainConfig,
    opt_fe_task: OptState,
    opt_msi: OptState,
    opt_be: Vec<OptState>,
    opt_fe_adv: Vec<OptState>,
    iterations: usize,
}

impl FoldTrainer {
    pub fn new(
        input_dim: usize,
        bias_cards: &[(String, usize)],
        config: &TrainConfig,
        regime: Regime,
        init_seed: u64,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if regime == Regime::BiasAblated && bias_cards.is_empty() {
            return Err(TrainError::Config(
                "bias-ablated training needs a non-empty bias list".into(),
            ));
        }
        let heads: &[(String, usize)] = match regime {
            Regime::Baseline => &[],
            Regime::BiasAblated => bias_cards,
        };
        let bundle = ModelBundle::init(
            input_dim,
            &config.model.fe_hidden,
            config.model.feature_dim,
            &config.model.head_hidden,
            2,
            heads,
            init_seed,
        );
        bundle.validate()?;
        Ok(FoldTrainer {
            opt_fe_task: OptState::new(&bundle.fe),
            opt_msi: OptState::new(&bundle.msi_head),
            opt_be: bundle.be_heads.iter().map(OptState::new).collect(),
            opt_fe_adv: bundle.be_heads.iter().map(|_| OptState::new(&bundle.fe)).collect(),
            bundle,
            regime,
            config: config.clone(),
            iterations: 0,
        })
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn check_finite(loss: f64, iteration: usize) -> Result<(), TrainError> {
        if !loss.is_finite() {
            return Err(TrainError::Diverged { iteration });
        }
        Ok(())
    }

    /// One full optimization step on a batch (phase 1, and phases 2-3 in the
    /// bias-ablated regime). Set `want_features` to also get the features
    /// recomputed after the phase-1 update (used for monitoring).
    pub fn step(&mut self, batch: &Batch, want_features: bool) -> Result<StepOutcome, TrainError> {
        batch.validate()?;
        let iteration = self.iterations;
        self.iterations += 1;

        // phase 1: descend the task loss into extractor and task head
        let fe_cache = forward(&self.bundle.fe, &batch.inputs)?;
        let head_cache = forward(&self.bundle.msi_head, &fe_cache.output)?;
        let (loss_msi, dlogits) = xent_loss_grad(&head_cache.output, &batch.labels)?;
        Self::check_finite(loss_msi, iteration)?;
        let (msi_grads, dfeat) = backward(&self.bundle.msi_head, &head_cache, &dlogits)?;
        let (fe_grads, _) = backward(&self.bundle.fe, &fe_cache, &dfeat)?;
        opt_step(
            &mut self.bundle.msi_head,
            &msi_grads,
            &mut self.opt_msi,
            self.config.optimizer,
            1.0,
            self.config.lr_task,
        )?;
        opt_step(
            &mut self.bundle.fe,
            &fe_grads,
            &mut self.opt_fe_task,
            self.config.optimizer,
            1.0,
            self.config.lr_task,
        )?;

        let features = if want_features {
            Some(forward(&self.bundle.fe, &batch.inputs)?.output)
        } else {
            None
        };

        let n_biases = self.bundle.be_heads.len();
        let mut loss_be: Vec<Option<f64>> = vec![None; n_biases];
        let mut adv_rows = 0usize;
        if self.regime == Regime::BiasAblated {
            let rho_idx: Vec<usize> = if self.config.adv_on_full_batch {
                (0..batch.len()).collect()
            } else {
                let rho = self.config.conditioning_class.index();
                (0..batch.len()).filter(|&i| batch.labels[i] == rho).collect()
            };
            adv_rows = rho_idx.len();
            if adv_rows >= 2 {
                let x_rho = batch.inputs.select(ndarray::Axis(0), &rho_idx);
                let onehots: Vec<Array2<f64>> = (0..n_biases)
                    .map(|b| {
                        let codes: Vec<usize> =
                            rho_idx.iter().map(|&i| batch.bias_values[b][i]).collect();
                        one_hot(&codes, self.bundle.be_heads[b].output_dim())
                    })
                    .collect::<Result<_, _>>()?;

                // phase 2: extractor frozen, each bias head descends its loss
                #[cfg(debug_assertions)]
                let (fe_hash, msi_hash) = (
                    ModelBundle::module_hash(&self.bundle.fe),
                    ModelBundle::module_hash(&self.bundle.msi_head),
                );
                let frozen_features = forward(&self.bundle.fe, &x_rho)?.output;
                for b in 0..n_biases {
                    let head_cache = forward(&self.bundle.be_heads[b], &frozen_features)?;
                    let (loss, dhat) = corr_loss_grad(&onehots[b], &head_cache.output)?;
                    Self::check_finite(loss, iteration)?;
                    loss_be[b] = Some(loss);
                    let (head_grads, _) =
                        backward(&self.bundle.be_heads[b], &head_cache, &dhat)?;
                    opt_step(
                        &mut self.bundle.be_heads[b],
                        &head_grads,
                        &mut self.opt_be[b],
                        self.config.optimizer,
                        1.0,
                        self.config.lr_be,
                    )?;
                }
                #[cfg(debug_assertions)]
                {
                    debug_assert_eq!(fe_hash, ModelBundle::module_hash(&self.bundle.fe));
                    debug_assert_eq!(msi_hash, ModelBundle::module_hash(&self.bundle.msi_head));
                }

                // phase 3: heads frozen, extractor ascends each bias loss
                #[cfg(debug_assertions)]
                let be_hashes: Vec<u64> = self
                    .bundle
                    .be_heads
                    .iter()
                    .map(ModelBundle::module_hash)
                    .collect();
                for b in 0..n_biases {
                    let fe_cache = forward(&self.bundle.fe, &x_rho)?;
                    let head_cache = forward(&self.bundle.be_heads[b], &fe_cache.output)?;
                    let (loss, dhat) = corr_loss_grad(&onehots[b], &head_cache.output)?;
                    Self::check_finite(loss, iteration)?;
                    let (_, dfeat) = backward(&self.bundle.be_heads[b], &head_cache, &dhat)?;
                    let (mut fe_grads, _) = backward(&self.bundle.fe, &fe_cache, &dfeat)?;
                    fe_grads.scale(self.config.lambda);
                    opt_step(
                        &mut self.bundle.fe,
                        &fe_grads,
                        &mut self.opt_fe_adv[b],
                        self.config.adv_optimizer,
                        -1.0,
                        self.config.lr_adv,
                    )?;
                }
                #[cfg(debug_assertions)]
                for (head, h0) in self.bundle.be_heads.iter().zip(be_hashes) {
                    debug_assert_eq!(h0, ModelBundle::module_hash(head));
                }
            }
        }

        Ok(StepOutcome {
            loss_msi,
            loss_be,
            adv_rows,
            features,
        })
    }
}

/// Mean task loss over a tile set (no parameter updates).
pub fn evaluation_loss(
    bundle: &ModelBundle,
    ds: &TileDataset,
    idx: &[usize],
    batch_size: usize,
) -> Result<f64, TrainError> {
    if idx.is_empty() {
        return Err(TrainError::EmptyInput("no tiles to evaluate".into()));
    }
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = ds.gather(chunk, None, None);
        let f = forward(&bundle.fe, &batch.inputs)?;
        let logits = forward(&bundle.msi_head, &f.output)?.output;
        let (loss, _) = xent_loss_grad(&logits, &batch.labels)?;
        total += loss;
    }
    Ok(total / idx.len() as f64)
}

/// Positive-class probabilities for a tile set.
pub fn predict_scores(
    bundle: &ModelBundle,
    ds: &TileDataset,
    idx: &[usize],
    batch_size: usize,
) -> Result<Vec<f64>, TrainError> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = ds.gather(chunk, None, None);
        let f = forward(&bundle.fe, &batch.inputs)?;
        let logits = forward(&bundle.msi_head, &f.output)?.output;
        for i in 0..logits.nrows() {
            let (a, b) = (logits[[i, 0]], logits[[i, 1]]);
            let m = a.max(b);
            let p = ((b - m).exp()) / ((a - m).exp() + (b - m).exp());
            out.push(p);
        }
    }
    Ok(out)
}

/// Train one fold: weighted batches over the training tiles, monitoring every
/// `monitor_every` batches, one snapshot per epoch, optional early stopping
/// on validation loss.
pub fn train_fold(
    ds: &TileDataset,
    fold: &Fold,
    fold_index: usize,
    config: &TrainConfig,
    regime: Regime,
) -> Result<FoldResult, TrainError> {
    config.validate()?;
    let train_idx = ds.indices_for_patients(&fold.train_patients);
    let val_idx = ds.indices_for_patients(&fold.validation_patients);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(TrainError::EmptyInput(format!(
            "fold {fold_index}: {} train / {} validation tiles",
            train_idx.len(),
            val_idx.len()
        )));
    }

    let patient_codes: Vec<usize> = {
        // per-fold patient indexing just for the sampler
        let mut map = std::collections::HashMap::new();
        train_idx
            .iter()
            .map(|&i| {
                let next = map.len();
                *map.entry(ds.patient_ids[i].as_str()).or_insert(next)
            })
            .collect()
    };
    let class_codes: Vec<usize> = train_idx.iter().map(|&i| ds.labels[i]).collect();
    let weights = composite_weights(&patient_codes, &class_codes)?;
    let mut sampler = BatchSampler::new(
        &weights,
        config.batch_size,
        substream_seed(config.seed, "fold_batches", fold_index as u64),
    )?;

    let bias_cards: Vec<(String, usize)> = ds
        .bias_names
        .iter()
        .cloned()
        .zip(ds.bias_cardinalities.iter().copied())
        .collect();
    let mut trainer = FoldTrainer::new(
        ds.feature_dim,
        &bias_cards,
        config,
        regime,
        substream_seed(config.seed, "model_init", fold_index as u64),
    )?;

    let batches_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let mut history = TrainHistory::new(&ds.bias_names);
    let mut snapshots: Vec<EpochSnapshot> = Vec::new();
    let augment_seed = substream_seed(config.seed, "augment", fold_index as u64);

    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;
    'epochs: for epoch in 0..config.epochs {
        for _ in 0..batches_per_epoch {
            let iteration = trainer.iterations();
            let local: Vec<usize> = sampler.next_batch();
            let chunk: Vec<usize> = local.iter().map(|&i| train_idx[i]).collect();
            let aug_seed = substream_seed(augment_seed, "iter", iteration as u64);
            let batch = ds.gather(&chunk, config.augment.as_ref(), Some(aug_seed));

            let monitor = iteration % config.monitor_every == 0;
            let outcome = trainer.step(&batch, monitor)?;
            if monitor {
                let f = outcome.features.as_ref().expect("requested features");
                let y_onehot = one_hot(&batch.labels, 2)?;
                let dc_task = distance_correlation_sq(f, &y_onehot)?.value;
                let mut dc_bias = Vec::with_capacity(ds.bias_names.len());
                for (b, card) in ds.bias_cardinalities.iter().enumerate() {
                    let b_onehot = one_hot(&batch.bias_values[b], *card)?;
                    dc_bias.push(distance_correlation_sq(f, &b_onehot)?.value);
                }
                // the baseline regime has no bias heads; pad to the column layout
                let mut loss_be = outcome.loss_be.clone();
                loss_be.resize(ds.bias_names.len(), None);
                history.push(HistoryRow {
                    iter: iteration,
                    loss_msi: outcome.loss_msi,
                    loss_be,
                    dc_task,
                    dc_bias,
                    adv_rows: outcome.adv_rows,
                });
            }
        }
        epochs_run = epoch + 1;
        let val_loss = evaluation_loss(&trainer.bundle, ds, &val_idx, config.batch_size)?;
        snapshots.push(EpochSnapshot {
            epoch,
            bundle: trainer.bundle.clone(),
            validation_loss: val_loss,
        });
        if let Some(patience) = config.patience {
            if val_loss + 1e-12 < best_val {
                best_val = val_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break 'epochs;
                }
            }
        }
    }

    Ok(FoldResult {
        bundle: trainer.bundle,
        history,
        snapshots,
        epochs_run,
    })
}
