//! Mini-batch training with sampled negatives, per-epoch validation and
//! early stopping on NDCG@20.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::dataio::{Partition, SplitDataset};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate_split, EarlyStopState, EvalOptions, MetricsRow, DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE};
use crate::model::SeqRecModel;
use crate::numkit::{AdamConfig, AdamState, DenseMatrix, Tape};
use crate::recmodel::{sample_negatives, sample_negatives_excluding, Batch, NUM_NEGATIVES};
use crate::rng::{streams, substream};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub negatives: usize,
    /// Also keep the example's history out of its negatives.
    pub exclude_history_negatives: bool,
    pub eval: EvalOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 256,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            negatives: NUM_NEGATIVES,
            exclude_history_negatives: false,
            eval: EvalOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.negatives == 0 {
            return Err(Error::Config("batch size, epochs, patience and negatives must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_ndcg20: f64,
    pub wall_clock_s: f64,
    pub trainable_params: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub trainable_params: usize,
    pub adapter_params: usize,
    pub train_seconds: f64,
    pub mean_eval_seconds: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_valid: MetricsRow,
    pub logs: Vec<EpochLog>,
    pub efficiency: EfficiencyReport,
}

/// Mean metrics of `model` on one partition.
pub fn evaluate_model<T: Scalar>(model: &SeqRecModel<T>, split: &SplitDataset, partition: Partition, opts: &EvalOptions) -> Result<MetricsRow> {
    let scorer = model.scorer()?;
    evaluate_split(&scorer, split, partition, opts)
}

/// Trains on every next-item example of the training users, validates after
/// each epoch and leaves `model` holding the best-validation parameters.
pub fn train_model<T: Scalar>(
    model: &mut SeqRecModel<T>,
    split: &SplitDataset,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if split.num_items() != model.num_items() {
        return Err(Error::Config(format!(
            "split has {} items, model has {}",
            split.num_items(),
            model.num_items()
        )));
    }
    let examples = split.train_examples();
    if examples.is_empty() {
        return Err(Error::Data("no training examples".into()));
    }
    let mut shuffle_rng = substream(seed, streams::SHUFFLE);
    let mut neg_rng = substream(seed, streams::NEGATIVES);
    let mut dropout_rng = substream(seed, streams::DROPOUT);

    let adam_cfg = AdamConfig {
        lr: T::of(cfg.lr),
        weight_decay: T::of(model.config().backbone.weight_decay),
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, model.store());
    let mut stopper = EarlyStopState::new(cfg.patience, cfg.max_epochs);
    let frozen: Vec<bool> = model.store().ids().map(|id| model.is_frozen(id)).collect();
    let n_items = model.num_items();
    let trainable = model.trainable_scalars();

    let start = Instant::now();
    let mut eval_seconds = 0.0;
    let mut logs = Vec::new();
    let mut best: Option<(Vec<DenseMatrix<T>>, MetricsRow)> = None;
    let mut order: Vec<usize> = (0..examples.len()).collect();

    loop {
        let epoch = stopper.epochs_seen() + 1;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Batch::default();
            for &i in chunk {
                let (hist, target) = &examples[i];
                let negs = if cfg.exclude_history_negatives {
                    sample_negatives_excluding(&mut neg_rng, *target, n_items, cfg.negatives, hist)?
                } else {
                    sample_negatives(&mut neg_rng, *target, n_items, cfg.negatives)?
                };
                batch.histories.push(hist.clone());
                batch.targets.push(*target);
                batch.negatives.push(negs);
            }
            let mut tape = Tape::new();
            let loss = model.loss(&mut tape, &batch, Some(&mut dropout_rng))?;
            let value = tape.scalar(loss)?;
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss {value} at epoch {epoch}, batch {}; parameters finite: {}",
                    batches + 1,
                    model.store().all_finite()
                )));
            }
            tape.backward_into(loss, model.store_mut())?;
            drop(tape);
            adam.step_where(model.store_mut(), |id| !frozen[id.index()])?;
            loss_sum += value.as_f64();
            batches += 1;
        }

        let t0 = Instant::now();
        let valid = evaluate_model(model, split, Partition::Valid, &cfg.eval)?;
        eval_seconds += t0.elapsed().as_secs_f64();
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / batches as f64,
            valid_ndcg20: valid.ndcg20,
            wall_clock_s: start.elapsed().as_secs_f64(),
            trainable_params: trainable,
        };
        on_epoch(&log)?;
        logs.push(log);

        let step = stopper.update(valid.ndcg20);
        if step.improved {
            let snapshot = model.store().ids().map(|id| model.store().value(id).clone()).collect();
            best = Some((snapshot, valid));
        }
        if step.stop {
            break;
        }
    }

    let (snapshot, best_valid) = best.ok_or_else(|| Error::Numerical("validation NDCG@20 was never finite".into()))?;
    let ids: Vec<_> = model.store().ids().collect();
    for (id, value) in ids.into_iter().zip(snapshot) {
        model.store_mut().set(id, value)?;
    }
    let epochs_run = stopper.epochs_seen();
    Ok(TrainReport {
        best_epoch: stopper.best_epoch(),
        epochs_run,
        best_valid,
        logs,
        efficiency: EfficiencyReport {
            trainable_params: trainable,
            adapter_params: model.adapter_scalars(),
            train_seconds: start.elapsed().as_secs_f64(),
            mean_eval_seconds: eval_seconds / epochs_run as f64,
            epochs: epochs_run,
        },
    })
}
