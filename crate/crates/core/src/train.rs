//! Branch-selective SGD training over per-class batches.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SizeClass;
use crate::loss::LossConfig;
use crate::mask::TrainingSample;
use crate::net::{gradient, ModelGradients, ModelParameters};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub loss: LossConfig,
    /// Emit a checkpoint every this many epochs; 0 disables periodic
    /// checkpoints (the final state is always emitted).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 65,
            batch_size: 16,
            shuffle_seed: 0,
            loss: LossConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        self.loss.validate()
    }
}

/// Mean loss of one class over one epoch.
#[derive(Debug, Clone, Serialize)]
pub struct EpochClassStat {
    pub epoch: usize,
    pub size_class: SizeClass,
    pub mean_loss: f64,
    pub steps: usize,
}

/// Bookkeeping emitted by a training run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainReport {
    pub per_epoch: Vec<EpochClassStat>,
    /// Optimizer steps whose batch carried each class.
    pub update_counts: BTreeMap<SizeClass, usize>,
    pub epoch_seconds: Vec<f64>,
}

fn accumulate(into: &mut ModelGradients, from: &ModelGradients) {
    let add = |a: &mut crate::net::ConvParams, b: &crate::net::ConvParams| {
        a.weight += &b.weight;
        a.bias += &b.bias;
    };
    for (a, b) in into.branch.iter_mut().zip(&from.branch) {
        add(a, b);
    }
    if let (Some(a), Some(b)) = (into.reduce.as_mut(), from.reduce.as_ref()) {
        for (a, b) in a.iter_mut().zip(b) {
            add(a, b);
        }
    }
    for (a, b) in into.main.iter_mut().zip(&from.main) {
        add(a, b);
    }
    add(&mut into.tail, &from.tail);
}

fn scale(grads: &mut ModelGradients, factor: f64) {
    let mul = |a: &mut crate::net::ConvParams| {
        a.weight.mapv_inplace(|v| v * factor);
        a.bias.mapv_inplace(|v| v * factor);
    };
    grads.branch.iter_mut().for_each(&mul);
    if let Some(reduce) = grads.reduce.as_mut() {
        reduce.iter_mut().for_each(&mul);
    }
    grads.main.iter_mut().for_each(&mul);
    mul(&mut grads.tail);
}

/// One SGD step on a single-class batch. Returns the batch mean loss.
///
/// Only the batch's branch and the shared trunk move; the other two branch
/// parameter sets are untouched memory.
pub fn train_step(
    params: &mut ModelParameters,
    batch: &[&TrainingSample],
    cfg: &TrainConfig,
) -> Result<f64> {
    cfg.validate()?;
    let first = batch
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty batch".into()))?;
    let size_class = first.size_class;
    if let Some(odd) = batch.iter().find(|s| s.size_class != size_class) {
        return Err(Error::MixedBatch(format!(
            "batch holds {size_class} and {}",
            odd.size_class
        )));
    }

    let mut total: Option<ModelGradients> = None;
    let mut loss_sum = 0.0;
    for sample in batch {
        let (loss, grads) = gradient(
            params,
            &sample.patch,
            size_class,
            &sample.targets,
            &cfg.loss,
        )?;
        loss_sum += loss;
        match total.as_mut() {
            Some(t) => accumulate(t, &grads),
            None => total = Some(grads),
        }
    }
    let mut total = total.expect("non-empty batch");
    scale(&mut total, 1.0 / batch.len() as f64);
    params.apply_sgd(&total, cfg.learning_rate)?;
    Ok(loss_sum / batch.len() as f64)
}

/// Groups sample indices per class.
fn class_indices(dataset: &[TrainingSample]) -> BTreeMap<SizeClass, Vec<usize>> {
    let mut map: BTreeMap<SizeClass, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.iter().enumerate() {
        map.entry(s.size_class).or_default().push(i);
    }
    map
}

/// Full training loop: per-epoch class-wise shuffling, homogeneous batches
/// scheduled largest-remaining-first, plain SGD updates, and checkpoint
/// callbacks on the configured cadence (plus the final epoch).
pub fn train<F>(
    mut params: ModelParameters,
    dataset: &[TrainingSample],
    cfg: &TrainConfig,
    mut on_checkpoint: F,
) -> Result<(ModelParameters, TrainReport)>
where
    F: FnMut(usize, &ModelParameters) -> Result<()>,
{
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let groups = class_indices(dataset);
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        // Shuffle within each class, then cut into batches.
        let mut queues: BTreeMap<SizeClass, Vec<Vec<usize>>> = BTreeMap::new();
        for (&class, indices) in &groups {
            let mut order = indices.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.shuffle_seed
                    .wrapping_add(epoch as u64)
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            order.shuffle(&mut rng);
            let batches: Vec<Vec<usize>> =
                order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
            queues.insert(class, batches);
        }

        let mut losses: BTreeMap<SizeClass, (f64, usize)> = BTreeMap::new();
        loop {
            // Proportional scheduling: take from the class with the most
            // batches left; ties resolve in class order.
            let next = queues
                .iter()
                .filter(|(_, q)| !q.is_empty())
                .max_by_key(|(_, q)| q.len())
                .map(|(&c, _)| c);
            let Some(class) = next else { break };
            let batch_idx = queues.get_mut(&class).unwrap().remove(0);
            let batch: Vec<&TrainingSample> = batch_idx.iter().map(|&i| &dataset[i]).collect();
            let loss = train_step(&mut params, &batch, cfg)?;
            let entry = losses.entry(class).or_insert((0.0, 0));
            entry.0 += loss;
            entry.1 += 1;
            *report.update_counts.entry(class).or_insert(0) += 1;
        }

        for (class, (sum, steps)) in losses {
            report.per_epoch.push(EpochClassStat {
                epoch,
                size_class: class,
                mean_loss: sum / steps as f64,
                steps,
            });
        }
        report.epoch_seconds.push(started.elapsed().as_secs_f64());

        let scheduled = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
        if scheduled || epoch == cfg.epochs {
            on_checkpoint(epoch, &params)?;
        }
    }
    Ok((params, report))
}
