use super::RealTensor;
use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::domain(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // log-sum-exp shifted so the largest term is exp(0); ln_1p keeps
    // the loss exact when the true class dominates
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label)
        .map(|(_, &v)| (v - logits[label]).exp())
        .sum();
    let loss = if logits[label] == max {
        rest.ln_1p()
    } else {
        let lse: f64 = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        lse - logits[label]
    };
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    if !loss.is_finite() {
        return Err(Error::numerical("non-finite cross-entropy"));
    }
    Ok((loss, grad))
}

/// Mean cross-entropy over a `[batch, classes]` logit tensor, with the
/// gradient of the mean.
pub fn batch_cross_entropy(logits: &RealTensor, labels: &[usize]) -> Result<(f64, RealTensor)> {
    if logits.shape.len() != 2 || logits.shape[0] != labels.len() || labels.is_empty() {
        return Err(Error::domain(format!(
            "logits {:?} do not match {} labels",
            logits.shape,
            labels.len()
        )));
    }
    let batch = labels.len() as f64;
    let mut total = 0.0;
    let mut grad = RealTensor::zeros(&logits.shape);
    let width = logits.shape[1];
    for (i, &y) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(i), y)?;
        total += l;
        for (dst, v) in grad.data[i * width..(i + 1) * width].iter_mut().zip(g) {
            *dst = v / batch;
        }
    }
    let loss = total / batch;
    if !loss.is_finite() {
        return Err(Error::numerical("non-finite batch loss"));
    }
    Ok((loss, grad))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
