//! Raw-spectrogram baselines that upload uncompressed views: a single
//! device, or all devices fused at the trunk-feature level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{batch_cross_entropy, softmax, Mlp, ParamStore, RealTensor, TrainConfig, Trunk, TrunkConfig, TrunkCache};
use crate::synth::NUM_CLASSES;
use crate::training::{check_labels, count_correct, gather_rows, run_epochs, EpochMetrics, StepOutcome};

pub const BASELINE_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    SingleView { device: usize },
    MultiView,
}

impl BaselineMode {
    /// Devices whose spectrograms the model consumes.
    pub fn devices(&self, num_devices: usize) -> Vec<usize> {
        match *self {
            BaselineMode::SingleView { device } => vec![device],
            BaselineMode::MultiView => (0..num_devices).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineNet {
    pub mode: BaselineMode,
    pub devices: Vec<usize>,
    pub trunks: Vec<Trunk>,
    pub head: Mlp,
}

impl BaselineNet {
    pub fn new(
        store: &mut ParamStore,
        mode: BaselineMode,
        num_devices: usize,
        trunk_cfg: &TrunkConfig,
        input_hw: (usize, usize),
    ) -> Result<Self> {
        let devices = mode.devices(num_devices);
        if devices.iter().any(|&d| d >= num_devices) {
            return Err(Error::domain(format!("baseline device out of range 0..{num_devices}")));
        }
        let trunks = devices
            .iter()
            .map(|d| Trunk::new(store, &format!("baseline.trunk{d}"), trunk_cfg, input_hw))
            .collect::<Result<Vec<_>>>()?;
        let width = trunks.iter().map(Trunk::features).sum();
        let head = Mlp::new(store, "baseline.head", &[width, BASELINE_HIDDEN, NUM_CLASSES])?;
        Ok(Self {
            mode,
            devices,
            trunks,
            head,
        })
    }

    fn features(&self, store: &ParamStore, views: &[RealTensor]) -> Result<(RealTensor, Vec<TrunkCache>)> {
        let batch = views[0].rows();
        let mut parts = Vec::with_capacity(self.trunks.len());
        let mut caches = Vec::with_capacity(self.trunks.len());
        for (trunk, x) in self.trunks.iter().zip(views) {
            let (f, c) = trunk.forward(store, x)?;
            parts.push(f);
            caches.push(c);
        }
        let width: usize = parts.iter().map(|p| p.shape[1]).sum();
        let mut data = Vec::with_capacity(batch * width);
        for i in 0..batch {
            for p in &parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok((RealTensor::from_vec(&[batch, width], data)?, caches))
    }

    /// Mean cross-entropy over a batch, gradients into `store`. `views`
    /// holds one `[B, 1, H, W]` tensor per consumed device, in device order.
    pub fn loss(&self, store: &mut ParamStore, views: &[RealTensor], labels: &[usize]) -> Result<(f64, RealTensor)> {
        if views.len() != self.trunks.len() {
            return Err(Error::domain(format!(
                "baseline expects {} views, got {}",
                self.trunks.len(),
                views.len()
            )));
        }
        let (feat, caches) = self.features(store, views)?;
        let (logits, hc) = self.head.forward(store, &feat)?;
        let (loss, g) = batch_cross_entropy(&logits, labels)?;
        let g = self.head.backward(store, &hc, &g, true)?.expect("input gradient requested");
        let batch = g.rows();
        let mut offset = 0;
        for ((trunk, x), cache) in self.trunks.iter().zip(views).zip(&caches) {
            let w = trunk.features();
            let mut gt = RealTensor::zeros(&[batch, w]);
            for i in 0..batch {
                gt.data[i * w..(i + 1) * w].copy_from_slice(&g.row(i)[offset..offset + w]);
            }
            trunk.backward(store, x, cache, &gt, false)?;
            offset += w;
        }
        Ok((loss, logits))
    }

    /// Class probabilities for a dataset given every device's spectrograms.
    pub fn predict(&self, store: &ParamStore, all_views: &[RealTensor]) -> Result<Vec<Vec<f64>>> {
        let n = all_views.first().map_or(0, RealTensor::rows);
        let mut out = Vec::with_capacity(n);
        let idx: Vec<usize> = (0..n).collect();
        for chunk in idx.chunks(64) {
            let views: Vec<RealTensor> = self.devices.iter().map(|&d| gather_rows(&all_views[d], chunk)).collect();
            let (feat, _) = self.features(store, &views)?;
            let (logits, _) = self.head.forward(store, &feat)?;
            out.extend((0..logits.rows()).map(|i| softmax(logits.row(i))));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedBaseline {
    pub net: BaselineNet,
    pub store: ParamStore,
    pub history: Vec<EpochMetrics>,
}

/// Trains a raw-spectrogram baseline. `all_views[k]` holds device `k`'s
/// spectrograms `[N, 1, S_T, S_F]`, aligned by event.
pub fn train_baseline(
    all_views: &[RealTensor],
    labels: &[usize],
    mode: BaselineMode,
    cfg: &TrainConfig,
    trunk_cfg: &TrunkConfig,
) -> Result<TrainedBaseline> {
    let first = all_views.first().ok_or_else(|| Error::domain("no views"))?;
    if first.shape.len() != 4 || all_views.iter().any(|v| v.shape != first.shape) {
        return Err(Error::domain("all views must share one [N, 1, H, W] shape"));
    }
    check_labels(first.rows(), labels, NUM_CLASSES)?;
    let mut store = ParamStore::new(cfg.seed);
    let net = BaselineNet::new(&mut store, mode, all_views.len(), trunk_cfg, (first.shape[2], first.shape[3]))?;
    let history = run_epochs(cfg, first.rows(), &mut store, |store, idx, _| {
        let views: Vec<RealTensor> = net.devices.iter().map(|&d| gather_rows(&all_views[d], idx)).collect();
        let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, logits) = net.loss(store, &views, &yb)?;
        Ok(StepOutcome {
            loss,
            correct: count_correct(&logits, &yb),
        })
    })?;
    Ok(TrainedBaseline { net, store, history })
}
