use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::NUM_CLASSES;
use crate::training::EpochMetrics;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion_matrix(predictions: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= NUM_CLASSES || y >= NUM_CLASSES {
            return Err(Error::domain(format!("class pair ({y}, {p}) out of range")));
        }
        counts[y][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Recall of every class; classes without test samples report 0.
    pub fn recalls(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, r)| match r.iter().sum::<u64>() {
                0 => 0.0,
                n => r[i] as f64 / n as f64,
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in 0..self.counts.len() {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "{i}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Outcome of one scheme on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: String,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub per_class_recall: Vec<f64>,
    /// Bits uploaded per event, summed over the devices that upload.
    pub payload_bits: u64,
    /// Upload time of one event at the configured SNR, seconds.
    pub upload_latency_s: f64,
    pub training_curve: Vec<EpochMetrics>,
}

/// Per-device outcome of local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub device_id: usize,
    pub latent_dim: usize,
    pub bits_per_element: u32,
    pub capacity_bps: f64,
    pub local_accuracy: f64,
    pub training_curve: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// SHA-256 of the configuration snapshot.
    pub config_sha256: String,
    pub num_train: usize,
    pub num_test: usize,
    pub spectrogram_shape: (usize, usize),
    pub devices: Vec<DeviceReport>,
    pub schemes: Vec<SchemeReport>,
}

impl MetricsReport {
    pub fn scheme(&self, label: &str) -> Option<&SchemeReport> {
        self.schemes.iter().find(|s| s.scheme == label)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::numerical(format!("report serialization: {e}")))
    }
}

/// JSON-lines rendering of a training curve.
pub fn curve_jsonl(curve: &[EpochMetrics]) -> String {
    curve
        .iter()
        .map(|m| serde_json::to_string(m).expect("plain struct serializes") + "\n")
        .collect()
}
