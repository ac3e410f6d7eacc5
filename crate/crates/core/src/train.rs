//! Full training loop and the retrain-from-scratch oracle.
//!
//! Training is deterministic per (seed, config): epoch shuffles use the
//! pinned Fisher-Yates from `rng`, and every optimizer step is sequential.
//! The oracle for a removal set is definitionally `train` on the dataset
//! with those rows deleted, so the two are bit-identical given equal seeds.

use std::time::Instant;

use crate::data::{remove_indices, Dataset};
use crate::error::{Error, Result};
use crate::nn::{init_model, loss_and_grad, ArchSpec, Batch, ClassifierModel};
use crate::optim::{step, OptimizerSpec, OptimizerState};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid_argument("epochs must be >= 1".to_string()));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid_argument("batch_size must be >= 1".to_string()));
        }
        self.optimizer.validate()
    }
}

/// Cumulative count of (sample, gradient-update) incidences plus wall time.
///
/// One optimizer step on a batch of b rows adds b. A full training pass
/// therefore adds epochs * n, while a single relabeling deletion adds only
/// k' (+ replay count) — the counter-level restatement of the O(n)-per-
/// request naive cost versus the constant per-request deletion cost.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostCounter {
    pub per_sample_updates: u64,
    pub wall_time: f64,
}

impl CostCounter {
    pub fn absorb(&mut self, other: &CostCounter) {
        self.per_sample_updates += other.per_sample_updates;
        self.wall_time += other.wall_time;
    }
}

/// One row of the per-epoch metrics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub train_loss: f64,
    /// Accuracy on the eval set, when one was supplied.
    pub eval_accuracy: Option<f64>,
    pub per_sample_updates: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ClassifierModel,
    pub opt_state: OptimizerState,
    pub cost: CostCounter,
    pub epoch_records: Vec<EpochRecord>,
}

/// Train a fresh model on `dataset`.
///
/// Runs epochs * ceil(n / batch_size) optimizer steps. Model init uses the
/// config seed; each epoch's shuffle comes from the same seeded stream.
/// A non-finite loss aborts with the failing step index.
pub fn train(dataset: &Dataset, arch: ArchSpec, config: &TrainConfig) -> Result<TrainOutput> {
    train_with_eval(dataset, None, arch, config)
}

/// `train`, additionally probing accuracy on `eval` after each epoch.
pub fn train_with_eval(
    dataset: &Dataset,
    eval: Option<&Dataset>,
    arch: ArchSpec,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid_argument(
            "cannot train on an empty dataset".to_string(),
        ));
    }
    if dataset.num_classes > arch.classes() {
        return Err(Error::invalid_argument(format!(
            "dataset has {} classes but the architecture outputs {}",
            dataset.num_classes,
            arch.classes()
        )));
    }
    if dataset.dim() != arch.input_dim() {
        return Err(Error::invalid_argument(format!(
            "dataset dim {} does not match architecture input dim {}",
            dataset.dim(),
            arch.input_dim()
        )));
    }

    let started = Instant::now();
    let mut model = init_model(arch, config.seed)?;
    let mut opt_state = OptimizerState::new(config.optimizer.kind, model.param_count());
    let mut shuffle_rng = rng::rng_from_seed(rng::derive_seed(config.seed, 0x5348_5546)); // "SHUF"

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut cost = CostCounter::default();
    let mut epoch_records = Vec::with_capacity(config.epochs);
    let mut global_step = 0usize;

    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            rng::shuffle(&mut shuffle_rng, &mut order);
        }
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::gather(dataset, chunk)?;
            let tag_step = |e: Error| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("diverged at step {global_step}: {msg}"))
                }
                other => other,
            };
            let (loss, grad) = loss_and_grad(&model, &batch).map_err(tag_step)?;
            step(&config.optimizer, &mut opt_state, &mut model.params, &grad)
                .map_err(tag_step)?;
            cost.per_sample_updates += chunk.len() as u64;
            loss_sum += loss;
            batches += 1;
            global_step += 1;
        }

        let eval_accuracy = match eval {
            Some(set) => Some(crate::nn::accuracy(&model, set)?),
            None => None,
        };
        epoch_records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / batches as f64,
            eval_accuracy,
            per_sample_updates: cost.per_sample_updates,
        });
    }

    cost.wall_time = started.elapsed().as_secs_f64();
    Ok(TrainOutput {
        model,
        opt_state,
        cost,
        epoch_records,
    })
}

/// Retrain from scratch on the dataset minus `removed` — the ground-truth
/// deletion baseline. Equivalent to `train(remove_indices(dataset, removed))`
/// bit for bit.
pub fn retrain_oracle(
    dataset: &Dataset,
    removed: &[usize],
    arch: ArchSpec,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    let survivors = remove_indices(dataset, removed)?;
    train(&survivors, arch, config)
}
