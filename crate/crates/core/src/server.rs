//! Edge server: fuses the uploaded device latents and trains the joint
//! inference model on them.

use serde::{Deserialize, Serialize};

use crate::encoder::{dequantize, LatentVector};
use crate::error::{Error, Result};
use crate::nn::{batch_cross_entropy, softmax, Mlp, ParamStore, RealTensor, TrainConfig};
use crate::synth::NUM_CLASSES;
use crate::training::{check_labels, count_correct, gather_rows, run_epochs, EpochMetrics, StepOutcome};

pub const SERVER_HIDDEN: usize = 64;

/// One device's upload for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceLatent {
    pub device_id: usize,
    pub latent: LatentVector,
}

/// Dequantized latents concatenated in device-id order. The ids present
/// must be exactly `0..views.len()`, in any arrival order.
pub fn concat_latents(views: &[DeviceLatent]) -> Result<Vec<f64>> {
    let mut ordered: Vec<Option<&DeviceLatent>> = vec![None; views.len()];
    for v in views {
        match ordered.get_mut(v.device_id) {
            Some(slot @ None) => *slot = Some(v),
            Some(Some(_)) => return Err(Error::domain(format!("duplicate view from device {}", v.device_id))),
            None => {
                return Err(Error::domain(format!(
                    "device {} outside 0..{}: a view is missing",
                    v.device_id,
                    views.len()
                )))
            }
        }
    }
    Ok(ordered
        .into_iter()
        .flat_map(|v| dequantize(&v.expect("every slot filled").latent))
        .collect())
}

/// Latents of `K` devices aligned by event.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewBatch {
    /// `latents[k][l]` is device `k`'s latent for event `l`.
    pub latents: Vec<Vec<LatentVector>>,
    pub labels: Vec<usize>,
}

impl MultiViewBatch {
    pub fn validate(&self) -> Result<()> {
        if self.latents.is_empty() {
            return Err(Error::domain("batch has no device views"));
        }
        for (k, view) in self.latents.iter().enumerate() {
            if view.len() != self.labels.len() {
                return Err(Error::domain(format!(
                    "device {k} has {} latents for {} events: missing view",
                    view.len(),
                    self.labels.len()
                )));
            }
            if let Some(first) = view.first() {
                if view.iter().any(|l| l.dim() != first.dim()) {
                    return Err(Error::domain(format!("device {k} mixes latent widths")));
                }
            }
        }
        check_labels(self.labels.len(), &self.labels, NUM_CLASSES)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Width of the fused input, `Σ d_k`.
    pub fn fused_width(&self) -> usize {
        self.latents.iter().map(|v| v.first().map_or(0, LatentVector::dim)).sum()
    }

    /// `[L, Σ d_k]` matrix of fused dequantized latents.
    pub fn fused(&self) -> Result<RealTensor> {
        self.validate()?;
        let width = self.fused_width();
        let mut data = Vec::with_capacity(self.len() * width);
        for l in 0..self.len() {
            for view in &self.latents {
                data.extend(dequantize(&view[l]));
            }
        }
        RealTensor::from_vec(&[self.len(), width], data)
    }
}

/// Joint decoder `Σd → 64 → 6`.
#[derive(Debug, Clone)]
pub struct ServerNet {
    pub mlp: Mlp,
}

impl ServerNet {
    pub fn new(store: &mut ParamStore, input_width: usize) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(store, "server", &[input_width, SERVER_HIDDEN, NUM_CLASSES])?,
        })
    }

    pub fn input_width(&self) -> usize {
        self.mlp.inputs()
    }

    pub fn logits(&self, store: &ParamStore, z: &RealTensor) -> Result<RealTensor> {
        Ok(self.mlp.forward(store, z)?.0)
    }

    /// Class probabilities of every row of `z`.
    pub fn predict_batch(&self, store: &ParamStore, z: &RealTensor) -> Result<Vec<Vec<f64>>> {
        let logits = self.logits(store, z)?;
        Ok((0..logits.rows()).map(|i| softmax(logits.row(i))).collect())
    }
}

/// Class probabilities for one event from its fused latent.
pub fn predict(net: &ServerNet, store: &ParamStore, fused: &[f64]) -> Result<Vec<f64>> {
    if fused.len() != net.input_width() {
        return Err(Error::domain(format!(
            "fused latent width {} does not match server input {}",
            fused.len(),
            net.input_width()
        )));
    }
    let z = RealTensor::from_vec(&[1, fused.len()], fused.to_vec())?;
    Ok(net.predict_batch(store, &z)?.remove(0))
}

/// Mean cross-entropy of the joint decoder, with gradients into `store`.
pub fn server_loss(net: &ServerNet, store: &mut ParamStore, z: &RealTensor, labels: &[usize]) -> Result<(f64, RealTensor)> {
    if labels.is_empty() {
        return Err(Error::domain("server loss needs a nonempty batch"));
    }
    check_labels(z.rows(), labels, NUM_CLASSES)?;
    let (logits, cache) = net.mlp.forward(store, z)?;
    let (loss, g) = batch_cross_entropy(&logits, labels)?;
    net.mlp.backward(store, &cache, &g, false)?;
    Ok((loss, logits))
}

#[derive(Debug, Clone)]
pub struct TrainedServer {
    pub net: ServerNet,
    pub store: ParamStore,
    pub history: Vec<EpochMetrics>,
}

/// Trains the joint decoder on fused latents `[L, Σd]`.
pub fn train_server(z: &RealTensor, labels: &[usize], cfg: &TrainConfig) -> Result<TrainedServer> {
    if z.shape.len() != 2 {
        return Err(Error::domain(format!("expected [L, width] latents, got {:?}", z.shape)));
    }
    check_labels(z.rows(), labels, NUM_CLASSES)?;
    let mut store = ParamStore::new(cfg.seed);
    let net = ServerNet::new(&mut store, z.shape[1])?;
    let history = run_epochs(cfg, z.rows(), &mut store, |store, idx, _| {
        let zb = gather_rows(z, idx);
        let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, logits) = server_loss(&net, store, &zb, &yb)?;
        Ok(StepOutcome {
            loss,
            correct: count_correct(&logits, &yb),
        })
    })?;
    Ok(TrainedServer { net, store, history })
}
