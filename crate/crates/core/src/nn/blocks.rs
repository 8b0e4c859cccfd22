//! Composite blocks shared by the device encoders, the server decoder and
//! the raw-spectrogram baselines.

use serde::{Deserialize, Serialize};

use super::layers::{flatten, relu, relu_backward, Conv2d, Dense, MaxPool2d, PoolCache};
use super::params::ParamStore;
use super::RealTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrunkConfig {
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub pool_window: usize,
    pub features: usize,
}

impl Default for TrunkConfig {
    fn default() -> Self {
        Self {
            conv_filters: 8,
            conv_kernel: 5,
            conv_stride: 2,
            pool_window: 2,
            features: 256,
        }
    }
}

/// conv → ReLU → maxpool → flatten → dense → ReLU, on single-channel
/// `[batch, 1, height, width]` input.
#[derive(Debug, Clone)]
pub struct Trunk {
    pub conv: Conv2d,
    pub pool: MaxPool2d,
    pub fc: Dense,
    pub input_hw: (usize, usize),
    pooled_shape: [usize; 3],
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct TrunkCache {
    conv_out: RealTensor,
    pool: PoolCache,
    flat: RealTensor,
    fc_out: RealTensor,
}

impl Trunk {
    pub fn new(store: &mut ParamStore, prefix: &str, cfg: &TrunkConfig, input_hw: (usize, usize)) -> Result<Self> {
        if cfg.conv_filters == 0 || cfg.conv_kernel == 0 || cfg.conv_stride == 0 || cfg.pool_window == 0 || cfg.features == 0 {
            return Err(Error::Config(format!("trunk sizes must be positive: {cfg:?}")));
        }
        let conv = Conv2d::new(
            store,
            &format!("{prefix}.conv"),
            1,
            cfg.conv_filters,
            cfg.conv_kernel,
            cfg.conv_stride,
        );
        let pool = MaxPool2d {
            window: cfg.pool_window,
        };
        let (ch, cw) = conv.output_hw(input_hw.0, input_hw.1)?;
        let (ph, pw) = pool.output_hw(ch, cw)?;
        let flat = cfg.conv_filters * ph * pw;
        let fc = Dense::new(store, &format!("{prefix}.fc"), flat, cfg.features);
        Ok(Self {
            conv,
            pool,
            fc,
            input_hw,
            pooled_shape: [cfg.conv_filters, ph, pw],
        })
    }

    pub fn features(&self) -> usize {
        self.fc.outputs
    }

    pub fn forward(&self, store: &ParamStore, x: &RealTensor) -> Result<(RealTensor, TrunkCache)> {
        if x.shape.len() != 4 || (x.shape[2], x.shape[3]) != self.input_hw {
            return Err(Error::domain(format!(
                "trunk expects [batch, 1, {}, {}], got {:?}",
                self.input_hw.0, self.input_hw.1, x.shape
            )));
        }
        let conv_out = self.conv.forward(store, x)?;
        let (pooled, pool) = self.pool.forward(&relu(&conv_out))?;
        let flat = flatten(pooled);
        let fc_out = self.fc.forward(store, &flat)?;
        let y = relu(&fc_out);
        Ok((
            y,
            TrunkCache {
                conv_out,
                pool,
                flat,
                fc_out,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the input gradient only when
    /// `need_input_grad` is set.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        x: &RealTensor,
        cache: &TrunkCache,
        grad_y: &RealTensor,
        need_input_grad: bool,
    ) -> Result<Option<RealTensor>> {
        let g = relu_backward(&cache.fc_out, grad_y);
        let g = self
            .fc
            .backward(store, &cache.flat, &g, true)?
            .expect("input gradient requested");
        let batch = g.rows();
        let [c, h, w] = self.pooled_shape;
        let g = g.reshape(&[batch, c, h, w])?;
        let g = self.pool.backward(&cache.pool, &g)?;
        let g = relu_backward(&cache.conv_out, &g);
        self.conv.backward(store, x, &g, need_input_grad)
    }

    /// Distance of the cached forward pass from the nearest point where the
    /// trunk is not differentiable: the smallest |pre-activation| of either
    /// ReLU, or the smallest gap between a positive pooled maximum and the
    /// runner-up in its window.
    pub fn kink_margin(&self, cache: &TrunkCache) -> f64 {
        let relu_margin = |t: &RealTensor| t.data.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let mut margin = relu_margin(&cache.conv_out).min(relu_margin(&cache.fc_out));
        let shape = &cache.pool.input_shape;
        let (h, w) = (shape[2], shape[3]);
        let k = self.pool.window;
        let (ho, wo) = (h / k, w / k);
        let act = |idx: usize| cache.conv_out.data[idx].max(0.0);
        for (n, &best) in cache.pool.argmax.iter().enumerate() {
            let top = act(best);
            if top <= 0.0 {
                continue;
            }
            let plane = n / (ho * wo);
            let (oy, ox) = ((n / wo) % ho, n % wo);
            let base = plane * h * w;
            for i in 0..k {
                for j in 0..k {
                    let idx = base + (oy * k + i) * w + ox * k + j;
                    if idx != best {
                        margin = margin.min(top - act(idx));
                    }
                }
            }
        }
        margin
    }
}

/// Dense layers with ReLU between them (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Input of every layer plus the pre-activation of every hidden layer.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<RealTensor>,
    pre: Vec<RealTensor>,
}

impl MlpCache {
    /// Smallest |pre-activation| over the hidden ReLUs; infinite without any.
    pub fn kink_margin(&self) -> f64 {
        self.pre
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

impl Mlp {
    /// `widths = [in, hidden..., out]`.
    pub fn new(store: &mut ParamStore, prefix: &str, widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &format!("{prefix}.{i}"), w[0], w[1]))
            .collect();
        Ok(Self { layers })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, store: &ParamStore, x: &RealTensor) -> Result<(RealTensor, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(store, &h)?;
            inputs.push(h);
            if i + 1 < self.layers.len() {
                h = relu(&out);
                pre.push(out);
            } else {
                h = out;
            }
        }
        Ok((h, MlpCache { inputs, pre }))
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &MlpCache,
        grad_y: &RealTensor,
        need_input_grad: bool,
    ) -> Result<Option<RealTensor>> {
        let mut g = grad_y.clone();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                g = relu_backward(&cache.pre[i], &g);
            }
            let need = i > 0 || need_input_grad;
            match self.layers[i].backward(store, &cache.inputs[i], &g, need)? {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckOptions};
    use crate::nn::loss::batch_cross_entropy;
    use crate::rng::seeded;
    use rand::Rng;

    fn small_cfg() -> TrunkConfig {
        TrunkConfig {
            conv_filters: 2,
            conv_kernel: 3,
            conv_stride: 2,
            pool_window: 2,
            features: 5,
        }
    }

    #[test]
    fn trunk_and_head_gradients() {
        let mut rng = seeded(8);
        let mut store = ParamStore::new(1);
        let trunk = Trunk::new(&mut store, "trunk", &small_cfg(), (11, 13)).unwrap();
        let head = Mlp::new(&mut store, "head", &[5, 4, 3]).unwrap();
        let x = RealTensor::from_vec(&[3, 1, 11, 13], (0..3 * 143).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let labels = [0, 2, 1];
        let report = grad_check(&store, &GradCheckOptions::default(), |s| {
            let (f, tc) = trunk.forward(s, &x)?;
            let (logits, hc) = head.forward(s, &f)?;
            let (loss, g) = batch_cross_entropy(&logits, &labels)?;
            let g = head.backward(s, &hc, &g, true)?.unwrap();
            trunk.backward(s, &x, &tc, &g, false)?;
            Ok(loss)
        })
        .unwrap();
        assert!(report.passes(1e-4), "{:?}", report.worst());
    }

    #[test]
    fn trunk_rejects_wrong_input() {
        let mut store = ParamStore::new(1);
        let trunk = Trunk::new(&mut store, "t", &small_cfg(), (11, 13)).unwrap();
        assert!(trunk.forward(&store, &RealTensor::zeros(&[1, 1, 11, 12])).is_err());
        assert!(Trunk::new(&mut store, "u", &small_cfg(), (3, 3)).is_err());
    }

    #[test]
    fn kink_margin_tracks_smallest_pre_activation() {
        let mut store = ParamStore::new(0);
        let mlp = Mlp::new(&mut store, "m", &[1, 2, 1]).unwrap();
        store.value_mut(mlp.layers[0].weight).data = vec![1.0, -1.0];
        let (_, cache) = mlp.forward(&store, &RealTensor::from_vec(&[1, 1], vec![0.25]).unwrap()).unwrap();
        assert!((cache.kink_margin() - 0.25).abs() < 1e-15);
        let single = Mlp::new(&mut store, "s", &[1, 1]).unwrap();
        let (_, cache) = single.forward(&store, &RealTensor::zeros(&[1, 1])).unwrap();
        assert_eq!(cache.kink_margin(), f64::INFINITY);
    }

    #[test]
    fn mlp_shapes() {
        let mut store = ParamStore::new(0);
        let mlp = Mlp::new(&mut store, "m", &[10, 64, 6]).unwrap();
        let (y, _) = mlp.forward(&store, &RealTensor::zeros(&[4, 10])).unwrap();
        assert_eq!(y.shape, vec![4, 6]);
        assert!(Mlp::new(&mut store, "n", &[10]).is_err());
    }
}
