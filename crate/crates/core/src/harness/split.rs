use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, TAG_SPLIT};
use crate::synth::{LabeledCsiSet, NUM_CLASSES};

/// Event indices on each side of a stratified split, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: each class contributes `round(ratio · count)` events
/// to training, clamped so both sides keep at least one.
pub fn split_indices(labels: &[usize], ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::domain(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut rng = derive_rng(seed, &[TAG_SPLIT]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..NUM_CLASSES {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::domain(format!("class {class} has fewer than two events")));
        }
        members.shuffle(&mut rng);
        let n_train = ((ratio * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= NUM_CLASSES) {
        return Err(Error::domain(format!("label {bad} out of range")));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Event-level split of a dataset; all views of an event stay together.
pub fn split_dataset(set: &LabeledCsiSet, ratio: f64, seed: u64) -> Result<(LabeledCsiSet, LabeledCsiSet)> {
    let labels: Vec<usize> = set.events.iter().map(|e| e.label).collect();
    let split = split_indices(&labels, ratio, seed)?;
    let pick = |idx: &[usize]| LabeledCsiSet {
        events: idx.iter().map(|&i| set.events[i].clone()).collect(),
        seed: set.seed,
    };
    Ok((pick(&split.train), pick(&split.test)))
}
