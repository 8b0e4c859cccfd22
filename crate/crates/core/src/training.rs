//! Minibatch loop shared by device, server and baseline training.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Optimizer, ParamStore, RealTensor, TrainConfig};
use crate::rng::{derive_rng, TAG_SHUFFLE};

/// One row of a training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Sample-weighted mean loss over the epoch's minibatches.
    pub loss: f64,
    /// Training accuracy of the minibatch predictions made during the epoch.
    pub accuracy: f64,
}

/// Outcome of one minibatch: mean loss and number of correct predictions.
pub(crate) struct StepOutcome {
    pub loss: f64,
    pub correct: usize,
}

/// Runs `cfg.epochs` shuffled passes over `num_samples` samples. `step`
/// receives the minibatch indices, must accumulate the gradient of the
/// minibatch mean loss into the store, and is followed by one optimizer update.
pub(crate) fn run_epochs(
    cfg: &TrainConfig,
    num_samples: usize,
    store: &mut ParamStore,
    mut step: impl FnMut(&mut ParamStore, &[usize], usize) -> Result<StepOutcome>,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if num_samples == 0 {
        return Err(Error::domain("cannot train on an empty dataset"));
    }
    let mut optimizer = Optimizer::new(cfg, store);
    let mut shuffle = derive_rng(cfg.seed, &[TAG_SHUFFLE]);
    let mut order: Vec<usize> = (0..num_samples).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    store.zero_grads();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(cfg.batch_size) {
            let out = step(store, batch, epoch)?;
            if !out.loss.is_finite() {
                return Err(Error::numerical(format!("non-finite loss in epoch {epoch}")));
            }
            optimizer.step(store)?;
            loss_sum += out.loss * batch.len() as f64;
            correct += out.correct;
        }
        history.push(EpochMetrics {
            epoch,
            loss: loss_sum / num_samples as f64,
            accuracy: correct as f64 / num_samples as f64,
        });
    }
    Ok(history)
}

/// Rows `idx` of a batched tensor, in order.
pub fn gather_rows(x: &RealTensor, idx: &[usize]) -> RealTensor {
    let n = x.row_len();
    let mut data = Vec::with_capacity(idx.len() * n);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    let mut shape = x.shape.clone();
    shape[0] = idx.len();
    RealTensor { shape, data }
}

pub(crate) fn count_correct(logits: &RealTensor, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| crate::nn::argmax(logits.row(i)) == y)
        .count()
}

/// Fraction of `predictions` equal to `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    predictions.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
}

pub(crate) fn check_labels(n: usize, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::domain(format!("{n} samples but {} labels", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::domain(format!("label {bad} out of range 0..{classes}")));
    }
    Ok(())
}
