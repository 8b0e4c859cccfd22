//! Device-side variational encoder: CNN trunk, Gaussian mean and spread
//! heads, reparameterized sampling, uniform quantization of the latent and
//! an auxiliary local decoder used for on-device training.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::LinkBudget;
use crate::error::{Error, Result};
use crate::nn::layers::{sigmoid, softplus_scalar};
use crate::nn::{batch_cross_entropy, softmax, Dense, Mlp, ParamStore, RealTensor, TrainConfig, Trunk, TrunkConfig};
use crate::rng::{derive_rng, TAG_NOISE};
use crate::synth::NUM_CLASSES;
use crate::training::{check_labels, count_correct, gather_rows, run_epochs, EpochMetrics, StepOutcome};

/// Lower bound added to the softplus spread.
pub const SIGMA_FLOOR: f64 = 1e-6;
pub const DEFAULT_CLIP: f64 = 3.0;
pub const LOCAL_HIDDEN: usize = 64;
/// Bit widths at or above this ship latents unquantized.
pub const PASS_THROUGH_BITS: u32 = 32;
/// Rows per chunk when encoding whole datasets.
const ENCODE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    pub bits: u32,
    pub clip: f64,
}

impl QuantizerSpec {
    pub fn new(bits: u32, clip: f64) -> Result<Self> {
        let q = Self { bits, clip };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits < 1 {
            return Err(Error::Config("quantizer needs at least one bit".into()));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(Error::Config(format!("clip must be positive, got {}", self.clip)));
        }
        Ok(())
    }

    pub fn is_pass_through(&self) -> bool {
        self.bits >= PASS_THROUGH_BITS
    }

    /// `2^bits`, or `None` in pass-through mode.
    pub fn levels(&self) -> Option<u64> {
        (!self.is_pass_through()).then(|| 1u64 << self.bits)
    }

    /// Step `2c / 2^bits`; zero in pass-through mode.
    pub fn step(&self) -> f64 {
        match self.levels() {
            Some(l) => 2.0 * self.clip / l as f64,
            None => 0.0,
        }
    }

    /// Code of one value. Values outside `[-c, c)` land on the edge codes.
    pub fn index_of(&self, x: f64) -> Option<i64> {
        let levels = self.levels()?;
        let c = self.clip;
        let clamped = x.clamp(-c, c - 1e-12);
        let idx = ((clamped + c) / self.step()).floor() as i64;
        Some(idx.clamp(0, levels as i64 - 1))
    }

    /// Representative value of a code, the centre of its cell.
    pub fn value_of(&self, index: i64) -> f64 {
        -self.clip + (index as f64 + 0.5) * self.step()
    }

    /// Straight-through derivative of the quantizer at `x`.
    pub fn ste_grad(&self, x: f64) -> f64 {
        if self.is_pass_through() || (-self.clip..=self.clip).contains(&x) {
            1.0
        } else {
            0.0
        }
    }
}

/// A transmitted latent: representative values plus integer codes when the
/// quantizer is active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub values: Vec<f64>,
    pub indices: Option<Vec<i64>>,
    pub spec: QuantizerSpec,
}

impl LatentVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn bit_cost(&self) -> u64 {
        self.values.len() as u64 * self.spec.bits as u64
    }
}

pub fn quantize(z: &[f64], spec: &QuantizerSpec) -> LatentVector {
    match spec.levels() {
        None => LatentVector {
            values: z.to_vec(),
            indices: None,
            spec: *spec,
        },
        Some(_) => {
            let indices: Vec<i64> = z.iter().map(|&x| spec.index_of(x).expect("quantized mode")).collect();
            LatentVector {
                values: indices.iter().map(|&i| spec.value_of(i)).collect(),
                indices: Some(indices),
                spec: *spec,
            }
        }
    }
}

/// Real-valued reading of a latent; recomputed from the codes when present.
pub fn dequantize(latent: &LatentVector) -> Vec<f64> {
    match &latent.indices {
        Some(idx) => idx.iter().map(|&i| latent.spec.value_of(i)).collect(),
        None => latent.values.clone(),
    }
}

/// `z̃ = μ + σ ⊙ ε`.
pub fn reparameterize(mu: &[f64], sigma: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != sigma.len() || mu.len() != eps.len() {
        return Err(Error::domain(format!(
            "reparameterize: lengths {}, {}, {} differ",
            mu.len(),
            sigma.len(),
            eps.len()
        )));
    }
    Ok(mu.iter().zip(sigma).zip(eps).map(|((m, s), e)| m + s * e).collect())
}

/// Architecture of one device: encoder trunk and heads (parameters named
/// `encoder.*`) and the local decoder (`decoder.*`). Parameters live in a
/// separate [`ParamStore`].
#[derive(Debug, Clone)]
pub struct DeviceNet {
    pub trunk: Trunk,
    pub mean_head: Dense,
    pub spread_head: Dense,
    pub decoder: Mlp,
    pub dim: usize,
}

impl DeviceNet {
    pub fn new(store: &mut ParamStore, trunk_cfg: &TrunkConfig, input_hw: (usize, usize), dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("latent dimension must be at least 1"));
        }
        let trunk = Trunk::new(store, "encoder.trunk", trunk_cfg, input_hw)?;
        let f = trunk.features();
        let mean_head = Dense::new(store, "encoder.mean", f, dim);
        let spread_head = Dense::new(store, "encoder.spread", f, dim);
        let decoder = Mlp::new(store, "decoder", &[dim, LOCAL_HIDDEN, NUM_CLASSES])?;
        Ok(Self {
            trunk,
            mean_head,
            spread_head,
            decoder,
            dim,
        })
    }

    /// Mean and spread (`softplus(s) + floor`) for a batch `[B, 1, H, W]`.
    pub fn encode_mean_spread(&self, store: &ParamStore, x: &RealTensor) -> Result<(RealTensor, RealTensor)> {
        let (f, _) = self.trunk.forward(store, x)?;
        let mu = self.mean_head.forward(store, &f)?;
        let s = self.spread_head.forward(store, &f)?;
        let sigma = RealTensor {
            shape: s.shape.clone(),
            data: s.data.iter().map(|&v| softplus_scalar(v) + SIGMA_FLOOR).collect(),
        };
        Ok((mu, sigma))
    }

    /// Test-time latents (`ε = 0`) for a whole dataset, quantized.
    pub fn encode_deterministic(&self, store: &ParamStore, x: &RealTensor, quantizer: &QuantizerSpec) -> Result<Vec<LatentVector>> {
        let mut out = Vec::with_capacity(x.rows());
        for chunk in chunks(x.rows()) {
            let (mu, _) = self.encode_mean_spread(store, &gather_rows(x, &chunk))?;
            out.extend((0..chunk.len()).map(|i| quantize(mu.row(i), quantizer)));
        }
        Ok(out)
    }

    /// Sampled latents `Q(μ + σ ⊙ ε)` for a whole dataset, one fresh draw per sample.
    pub fn encode_sampled<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        x: &RealTensor,
        quantizer: &QuantizerSpec,
        rng: &mut R,
    ) -> Result<Vec<LatentVector>> {
        let mut out = Vec::with_capacity(x.rows());
        for chunk in chunks(x.rows()) {
            let (mu, sigma) = self.encode_mean_spread(store, &gather_rows(x, &chunk))?;
            for i in 0..chunk.len() {
                let eps: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                let z = reparameterize(mu.row(i), sigma.row(i), &eps)?;
                out.push(quantize(&z, quantizer));
            }
        }
        Ok(out)
    }

    /// Local decoder class probabilities on test-time latents.
    pub fn local_predict(&self, store: &ParamStore, x: &RealTensor, quantizer: &QuantizerSpec) -> Result<Vec<Vec<f64>>> {
        let latents = self.encode_deterministic(store, x, quantizer)?;
        let rows: Vec<&[f64]> = latents.iter().map(|l| l.values.as_slice()).collect();
        let z = RealTensor::stack(&rows, &[self.dim])?;
        let (logits, _) = self.decoder.forward(store, &z)?;
        Ok((0..logits.rows()).map(|i| softmax(logits.row(i))).collect())
    }
}

fn chunks(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(ENCODE_CHUNK).map(move |s| (s..(s + ENCODE_CHUNK).min(n)).collect())
}

/// Loss and logits of one device minibatch.
#[derive(Debug, Clone)]
pub struct DeviceLossOutput {
    pub loss: f64,
    pub logits: RealTensor,
}

/// Mean cross-entropy of the local decoder on `Q(μ + σ ⊙ ε)` for a batch,
/// accumulating gradients into `store`. Gradients cross the quantizer by the
/// straight-through rule. `quantizer = None` runs the unquantized model.
pub fn device_loss(
    net: &DeviceNet,
    store: &mut ParamStore,
    x: &RealTensor,
    labels: &[usize],
    eps: &RealTensor,
    quantizer: Option<&QuantizerSpec>,
) -> Result<DeviceLossOutput> {
    let batch = x.rows();
    if labels.is_empty() {
        return Err(Error::domain("device loss needs a nonempty batch"));
    }
    check_labels(batch, labels, NUM_CLASSES)?;
    if eps.shape != [batch, net.dim] {
        return Err(Error::domain(format!(
            "noise shape {:?}, expected [{batch}, {}]",
            eps.shape, net.dim
        )));
    }
    let (f, trunk_cache) = net.trunk.forward(store, x)?;
    let mu = net.mean_head.forward(store, &f)?;
    let s = net.spread_head.forward(store, &f)?;
    let n = batch * net.dim;
    let mut z = RealTensor::zeros(&[batch, net.dim]);
    let mut ste = vec![1.0; n];
    for i in 0..n {
        let sigma = softplus_scalar(s.data[i]) + SIGMA_FLOOR;
        let zt = mu.data[i] + sigma * eps.data[i];
        z.data[i] = match quantizer {
            Some(q) if !q.is_pass_through() => {
                ste[i] = q.ste_grad(zt);
                q.value_of(q.index_of(zt).expect("quantized mode"))
            }
            _ => zt,
        };
    }
    z.ensure_finite("device latent")?;
    let (logits, dec_cache) = net.decoder.forward(store, &z)?;
    let (loss, g_logits) = batch_cross_entropy(&logits, labels)?;
    let g_z = net
        .decoder
        .backward(store, &dec_cache, &g_logits, true)?
        .expect("input gradient requested");
    let mut g_mu = RealTensor::zeros(&mu.shape);
    let mut g_s = RealTensor::zeros(&s.shape);
    for i in 0..n {
        let g = g_z.data[i] * ste[i];
        g_mu.data[i] = g;
        g_s.data[i] = g * eps.data[i] * sigmoid(s.data[i]);
    }
    let mut g_f = net
        .mean_head
        .backward(store, &f, &g_mu, true)?
        .expect("input gradient requested");
    let g_f2 = net
        .spread_head
        .backward(store, &f, &g_s, true)?
        .expect("input gradient requested");
    for (a, b) in g_f.data.iter_mut().zip(&g_f2.data) {
        *a += b;
    }
    net.trunk.backward(store, x, &trunk_cache, &g_f, false)?;
    Ok(DeviceLossOutput { loss, logits })
}

/// Result of on-device training.
#[derive(Debug, Clone)]
pub struct TrainedDevice {
    pub device_id: usize,
    pub net: DeviceNet,
    pub store: ParamStore,
    pub quantizer: QuantizerSpec,
    pub history: Vec<EpochMetrics>,
    /// Final-encoder sampled latents of the training set, in input order.
    pub train_latents: Vec<LatentVector>,
}

impl PartialEq for TrainedDevice {
    fn eq(&self, other: &Self) -> bool {
        self.device_id == other.device_id
            && self.store == other.store
            && self.quantizer == other.quantizer
            && self.history == other.history
            && self.train_latents == other.train_latents
    }
}

/// Trains one device encoder with its local decoder and samples the upload
/// latents of every training sample with the final encoder.
///
/// `x` holds normalized spectrograms `[N, 1, S_T, S_F]`. The latent width is
/// the link budget's `dim`; the quantizer uses the link's bits per element
/// with clip `clip`. Initialization, shuffling and noise all derive from
/// `cfg.seed`.
pub fn train_device(
    device_id: usize,
    x: &RealTensor,
    labels: &[usize],
    link: &LinkBudget,
    cfg: &TrainConfig,
    trunk_cfg: &TrunkConfig,
    clip: f64,
) -> Result<TrainedDevice> {
    if x.shape.len() != 4 || x.shape[1] != 1 {
        return Err(Error::domain(format!("expected [N, 1, S_T, S_F] spectrograms, got {:?}", x.shape)));
    }
    check_labels(x.rows(), labels, NUM_CLASSES)?;
    let quantizer = QuantizerSpec::new(link.bits_per_element, clip)?;
    if !link.complies(link.dim, quantizer.bits) {
        return Err(Error::InsufficientCapacity {
            budget_bits: link.capacity_bps * link.time_budget_s,
            required_bits: link.dim as u64 * quantizer.bits as u64 * link.samples_per_transmission,
        });
    }
    let mut store = ParamStore::new(cfg.seed);
    let net = DeviceNet::new(&mut store, trunk_cfg, (x.shape[2], x.shape[3]), link.dim)?;
    let mut noise = derive_rng(cfg.seed, &[TAG_NOISE]);
    let dim = net.dim;
    let history = run_epochs(cfg, x.rows(), &mut store, |store, idx, _| {
        let xb = gather_rows(x, idx);
        let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let eps = RealTensor {
            shape: vec![idx.len(), dim],
            data: (0..idx.len() * dim).map(|_| noise.sample(StandardNormal)).collect(),
        };
        let out = device_loss(&net, store, &xb, &yb, &eps, Some(&quantizer))?;
        Ok(StepOutcome {
            loss: out.loss,
            correct: count_correct(&out.logits, &yb),
        })
    })?;
    let train_latents = net.encode_sampled(&store, x, &quantizer, &mut noise)?;
    Ok(TrainedDevice {
        device_id,
        net,
        store,
        quantizer,
        history,
        train_latents,
    })
}
