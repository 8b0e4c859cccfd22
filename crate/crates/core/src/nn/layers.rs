//! Batched layers. Activations carry the batch as the leading dimension.
//! Every `backward` accumulates parameter gradients into the store and
//! returns the input gradient when asked for it.

use super::gemm::gemm;
use super::params::{ParamId, ParamStore};
use super::RealTensor;
use crate::error::{Error, Result};

fn shape_err(layer: &str, expect: String, got: &[usize]) -> Error {
    Error::domain(format!("{layer}: expected input {expect}, got {got:?}"))
}

/// Fully connected layer, `y = x·Wᵀ + b` with `W` stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize) -> Self {
        let weight = store.add_glorot(&format!("{name}.weight"), &[outputs, inputs], inputs, outputs);
        let bias = store.add_zeros(&format!("{name}.bias"), &[outputs]);
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    fn check(&self, x: &RealTensor) -> Result<usize> {
        if x.shape.len() != 2 || x.shape[1] != self.inputs {
            return Err(shape_err("dense", format!("[batch, {}]", self.inputs), &x.shape));
        }
        Ok(x.shape[0])
    }

    pub fn forward(&self, store: &ParamStore, x: &RealTensor) -> Result<RealTensor> {
        let batch = self.check(x)?;
        let w = store.value(self.weight);
        let b = store.value(self.bias);
        let mut y = RealTensor::zeros(&[batch, self.outputs]);
        for row in y.data.chunks_mut(self.outputs) {
            row.copy_from_slice(&b.data);
        }
        gemm(batch, self.inputs, self.outputs, 1.0, &x.data, false, &w.data, true, 1.0, &mut y.data);
        y.ensure_finite("dense output")?;
        Ok(y)
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        x: &RealTensor,
        grad_y: &RealTensor,
        need_input_grad: bool,
    ) -> Result<Option<RealTensor>> {
        let batch = self.check(x)?;
        if grad_y.shape != [batch, self.outputs] {
            return Err(shape_err("dense backward", format!("[{batch}, {}]", self.outputs), &grad_y.shape));
        }
        {
            let (_, gw) = store.split_mut(self.weight);
            gemm(self.outputs, batch, self.inputs, 1.0, &grad_y.data, true, &x.data, false, 1.0, &mut gw.data);
        }
        {
            let gb = store.grad_mut(self.bias);
            for row in grad_y.data.chunks(self.outputs) {
                for (g, v) in gb.data.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let w = store.value(self.weight);
        let mut gx = RealTensor::zeros(&[batch, self.inputs]);
        gemm(batch, self.outputs, self.inputs, 1.0, &grad_y.data, false, &w.data, false, 0.0, &mut gx.data);
        Ok(Some(gx))
    }
}

/// Valid (unpadded) 2-D convolution over `[batch, channels, height, width]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        let weight = store.add_glorot(
            &format!("{name}.weight"),
            &[out_channels, in_channels, kernel, kernel],
            fan_in,
            fan_out,
        );
        let bias = store.add_zeros(&format!("{name}.bias"), &[out_channels]);
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kernel || w < self.kernel {
            return Err(Error::domain(format!(
                "conv2d: input {h}x{w} smaller than kernel {}",
                self.kernel
            )));
        }
        Ok(((h - self.kernel) / self.stride + 1, (w - self.kernel) / self.stride + 1))
    }

    fn dims(&self, x: &RealTensor) -> Result<(usize, usize, usize, usize, usize)> {
        if x.shape.len() != 4 || x.shape[1] != self.in_channels {
            return Err(shape_err(
                "conv2d",
                format!("[batch, {}, h, w]", self.in_channels),
                &x.shape,
            ));
        }
        let (h, w) = (x.shape[2], x.shape[3]);
        let (ho, wo) = self.output_hw(h, w)?;
        Ok((x.shape[0], h, w, ho, wo))
    }

    /// Column matrix `[C·k·k, Ho·Wo]` of one sample.
    fn im2col(&self, sample: &[f64], h: usize, w: usize, ho: usize, wo: usize, cols: &mut [f64]) {
        let k = self.kernel;
        let p = ho * wo;
        for c in 0..self.in_channels {
            let plane = &sample[c * h * w..(c + 1) * h * w];
            for i in 0..k {
                for j in 0..k {
                    let r = (c * k + i) * k + j;
                    let dst = &mut cols[r * p..(r + 1) * p];
                    for oy in 0..ho {
                        let src = &plane[(oy * self.stride + i) * w + j..];
                        for ox in 0..wo {
                            dst[oy * wo + ox] = src[ox * self.stride];
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], h: usize, w: usize, ho: usize, wo: usize, sample: &mut [f64]) {
        let k = self.kernel;
        let p = ho * wo;
        for c in 0..self.in_channels {
            let plane = &mut sample[c * h * w..(c + 1) * h * w];
            for i in 0..k {
                for j in 0..k {
                    let r = (c * k + i) * k + j;
                    let src = &cols[r * p..(r + 1) * p];
                    for oy in 0..ho {
                        let base = (oy * self.stride + i) * w + j;
                        for ox in 0..wo {
                            plane[base + ox * self.stride] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &RealTensor) -> Result<RealTensor> {
        let (batch, h, w, ho, wo) = self.dims(x)?;
        let r = self.in_channels * self.kernel * self.kernel;
        let p = ho * wo;
        let wt = store.value(self.weight);
        let b = store.value(self.bias);
        let in_len = self.in_channels * h * w;
        let out_len = self.out_channels * p;
        let mut y = RealTensor::zeros(&[batch, self.out_channels, ho, wo]);
        let mut cols = vec![0.0; r * p];
        for s in 0..batch {
            self.im2col(&x.data[s * in_len..(s + 1) * in_len], h, w, ho, wo, &mut cols);
            let out = &mut y.data[s * out_len..(s + 1) * out_len];
            for (oc, plane) in out.chunks_mut(p).enumerate() {
                plane.iter_mut().for_each(|v| *v = b.data[oc]);
            }
            gemm(self.out_channels, r, p, 1.0, &wt.data, false, &cols, false, 1.0, out);
        }
        y.ensure_finite("conv2d output")?;
        Ok(y)
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        x: &RealTensor,
        grad_y: &RealTensor,
        need_input_grad: bool,
    ) -> Result<Option<RealTensor>> {
        let (batch, h, w, ho, wo) = self.dims(x)?;
        if grad_y.shape != [batch, self.out_channels, ho, wo] {
            return Err(shape_err(
                "conv2d backward",
                format!("[{batch}, {}, {ho}, {wo}]", self.out_channels),
                &grad_y.shape,
            ));
        }
        let r = self.in_channels * self.kernel * self.kernel;
        let p = ho * wo;
        let in_len = self.in_channels * h * w;
        let out_len = self.out_channels * p;
        let mut cols = vec![0.0; r * p];
        let mut dcols = vec![0.0; if need_input_grad { r * p } else { 0 }];
        let mut gx = need_input_grad.then(|| RealTensor::zeros(&x.shape));
        for s in 0..batch {
            let gy = &grad_y.data[s * out_len..(s + 1) * out_len];
            self.im2col(&x.data[s * in_len..(s + 1) * in_len], h, w, ho, wo, &mut cols);
            {
                let (_, gw) = store.split_mut(self.weight);
                gemm(self.out_channels, p, r, 1.0, gy, false, &cols, true, 1.0, &mut gw.data);
            }
            {
                let gb = store.grad_mut(self.bias);
                for (oc, plane) in gy.chunks(p).enumerate() {
                    gb.data[oc] += plane.iter().sum::<f64>();
                }
            }
            if let Some(gx) = gx.as_mut() {
                let wt = store.value(self.weight);
                gemm(r, self.out_channels, p, 1.0, &wt.data, true, gy, false, 0.0, &mut dcols);
                self.col2im_add(&dcols, h, w, ho, wo, &mut gx.data[s * in_len..(s + 1) * in_len]);
            }
        }
        Ok(gx)
    }
}

/// Non-overlapping max pooling (window = stride), floor on the output size.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub window: usize,
}

/// Flat input index of every pooled maximum.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ho, wo) = (h / self.window, w / self.window);
        if ho == 0 || wo == 0 {
            return Err(Error::domain(format!(
                "maxpool2d: input {h}x{w} smaller than window {}",
                self.window
            )));
        }
        Ok((ho, wo))
    }

    pub fn forward(&self, x: &RealTensor) -> Result<(RealTensor, PoolCache)> {
        if x.shape.len() != 4 {
            return Err(shape_err("maxpool2d", "[batch, c, h, w]".into(), &x.shape));
        }
        let (batch, ch, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (ho, wo) = self.output_hw(h, w)?;
        let k = self.window;
        let mut y = RealTensor::zeros(&[batch, ch, ho, wo]);
        let mut argmax = Vec::with_capacity(y.len());
        for plane_idx in 0..batch * ch {
            let base = plane_idx * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + (oy * k) * w + ox * k;
                    for i in 0..k {
                        for j in 0..k {
                            let idx = base + (oy * k + i) * w + ox * k + j;
                            if x.data[idx] > x.data[best] {
                                best = idx;
                            }
                        }
                    }
                    y.data[argmax.len()] = x.data[best];
                    argmax.push(best);
                }
            }
        }
        Ok((
            y,
            PoolCache {
                argmax,
                input_shape: x.shape.clone(),
            },
        ))
    }

    pub fn backward(&self, cache: &PoolCache, grad_y: &RealTensor) -> Result<RealTensor> {
        if grad_y.len() != cache.argmax.len() {
            return Err(Error::domain("maxpool2d backward: gradient size mismatch"));
        }
        let mut gx = RealTensor::zeros(&cache.input_shape);
        for (g, &idx) in grad_y.data.iter().zip(&cache.argmax) {
            gx.data[idx] += g;
        }
        Ok(gx)
    }
}

pub fn relu(x: &RealTensor) -> RealTensor {
    RealTensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Gradient through ReLU given the layer input.
pub fn relu_backward(x: &RealTensor, grad_y: &RealTensor) -> RealTensor {
    RealTensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&grad_y.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

#[inline]
pub fn softplus_scalar(x: f64) -> f64 {
    // ln(1 + e^x) without overflow
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: &RealTensor) -> RealTensor {
    RealTensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| softplus_scalar(v)).collect(),
    }
}

pub fn softplus_backward(x: &RealTensor, grad_y: &RealTensor) -> RealTensor {
    RealTensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&grad_y.data)
            .map(|(&v, &g)| g * sigmoid(v))
            .collect(),
    }
}

/// Collapses all but the batch dimension.
pub fn flatten(x: RealTensor) -> RealTensor {
    let batch = x.rows();
    let n = x.row_len();
    RealTensor {
        shape: vec![batch, n],
        data: x.data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_relative_error, numeric_gradient, REL_FLOOR};
    use crate::rng::seeded;
    use rand::Rng;

    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> RealTensor {
        let n = shape.iter().product();
        RealTensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    /// Projects the output onto a fixed random direction so the scalar loss
    /// exercises every output entry.
    fn projection(y: &RealTensor, dir: &[f64]) -> f64 {
        y.data.iter().zip(dir).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let mut store = ParamStore::new(0);
        let d = Dense::new(&mut store, "fc", 4, 4);
        let w = store.value_mut(d.weight);
        w.data.iter_mut().enumerate().for_each(|(i, v)| *v = if i % 5 == 0 { 1.0 } else { 0.0 });
        let x = RealTensor::from_vec(&[2, 4], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0, -1.0, 2.0]).unwrap();
        assert_eq!(d.forward(&store, &x).unwrap(), x);
    }

    #[test]
    fn unit_1x1_conv_passes_input_through() {
        let mut store = ParamStore::new(0);
        let c = Conv2d::new(&mut store, "conv", 1, 1, 1, 1);
        store.value_mut(c.weight).data[0] = 1.0;
        let x = random_tensor(&[2, 1, 3, 4], &mut seeded(1));
        assert_eq!(c.forward(&store, &x).unwrap(), x);
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = seeded(10);
        for trial in 0..10 {
            let (batch, i, o) = (1 + trial % 3, 2 + trial, 1 + (trial * 7) % 5);
            let mut store = ParamStore::new(trial as u64);
            let d = Dense::new(&mut store, "fc", i, o);
            store.value_mut(d.bias).data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let x = random_tensor(&[batch, i], &mut rng);
            let dir: Vec<f64> = (0..batch * o).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gy = RealTensor::from_vec(&[batch, o], dir.clone()).unwrap();
            let gx = d.backward(&mut store, &x, &gy, true).unwrap().unwrap();

            let num_x = numeric_gradient(&x.data, H, |xs| {
                let xt = RealTensor::from_vec(&x.shape, xs.to_vec()).unwrap();
                projection(&d.forward(&store, &xt).unwrap(), &dir)
            });
            assert!(max_relative_error(&gx.data, &num_x, REL_FLOOR) < TOL);

            for id in [d.weight, d.bias] {
                let analytic = store.grad(id).data.clone();
                let base = store.value(id).data.clone();
                let num = numeric_gradient(&base, H, |ps| {
                    let mut s = store.clone();
                    s.value_mut(id).data.copy_from_slice(ps);
                    projection(&d.forward(&s, &x).unwrap(), &dir)
                });
                assert!(max_relative_error(&analytic, &num, REL_FLOOR) < TOL);
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = seeded(20);
        for trial in 0..10 {
            let (cin, cout) = (1 + trial % 2, 1 + trial % 3);
            let kernel = 1 + trial % 3;
            let stride = 1 + trial % 2;
            let (h, w) = (kernel + 2 + trial % 3, kernel + 3);
            let mut store = ParamStore::new(trial as u64);
            let conv = Conv2d::new(&mut store, "conv", cin, cout, kernel, stride);
            store.value_mut(conv.bias).data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let x = random_tensor(&[2, cin, h, w], &mut rng);
            let y = conv.forward(&store, &x).unwrap();
            let dir: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gy = RealTensor::from_vec(&y.shape, dir.clone()).unwrap();
            let gx = conv.backward(&mut store, &x, &gy, true).unwrap().unwrap();

            let num_x = numeric_gradient(&x.data, H, |xs| {
                let xt = RealTensor::from_vec(&x.shape, xs.to_vec()).unwrap();
                projection(&conv.forward(&store, &xt).unwrap(), &dir)
            });
            assert!(max_relative_error(&gx.data, &num_x, REL_FLOOR) < TOL, "trial {trial}");

            for id in [conv.weight, conv.bias] {
                let analytic = store.grad(id).data.clone();
                let base = store.value(id).data.clone();
                let num = numeric_gradient(&base, H, |ps| {
                    let mut s = store.clone();
                    s.value_mut(id).data.copy_from_slice(ps);
                    projection(&conv.forward(&s, &x).unwrap(), &dir)
                });
                assert!(max_relative_error(&analytic, &num, REL_FLOOR) < TOL, "trial {trial}");
            }
        }
    }

    #[test]
    fn pool_and_activation_gradients_match_finite_differences() {
        let mut rng = seeded(30);
        for trial in 0..10 {
            let shape = [1 + trial % 2, 1 + trial % 3, 4 + trial % 3, 5 + trial % 2];
            let x = random_tensor(&shape, &mut rng);
            let pool = MaxPool2d { window: 2 };
            let (y, cache) = pool.forward(&x).unwrap();
            let dir: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gx = pool
                .backward(&cache, &RealTensor::from_vec(&y.shape, dir.clone()).unwrap())
                .unwrap();
            let num = numeric_gradient(&x.data, H, |xs| {
                let xt = RealTensor::from_vec(&shape, xs.to_vec()).unwrap();
                projection(&pool.forward(&xt).unwrap().0, &dir)
            });
            assert!(max_relative_error(&gx.data, &num, REL_FLOOR) < TOL);

            let dir: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gy = RealTensor::from_vec(&shape, dir.clone()).unwrap();
            let num_relu = numeric_gradient(&x.data, H, |xs| {
                projection(&relu(&RealTensor::from_vec(&shape, xs.to_vec()).unwrap()), &dir)
            });
            assert!(max_relative_error(&relu_backward(&x, &gy).data, &num_relu, REL_FLOOR) < TOL);
            let num_sp = numeric_gradient(&x.data, H, |xs| {
                projection(&softplus(&RealTensor::from_vec(&shape, xs.to_vec()).unwrap()), &dir)
            });
            assert!(max_relative_error(&softplus_backward(&x, &gy).data, &num_sp, REL_FLOOR) < TOL);
        }
    }

    #[test]
    fn flatten_keeps_batch() {
        let x = RealTensor::zeros(&[3, 2, 4, 5]);
        assert_eq!(flatten(x).shape, vec![3, 40]);
    }

    #[test]
    fn shape_mismatches_are_domain_errors() {
        let mut store = ParamStore::new(0);
        let d = Dense::new(&mut store, "fc", 3, 2);
        assert!(matches!(d.forward(&store, &RealTensor::zeros(&[1, 4])), Err(Error::Domain(_))));
        let c = Conv2d::new(&mut store, "conv", 1, 2, 5, 2);
        assert!(c.forward(&store, &RealTensor::zeros(&[1, 1, 3, 3])).is_err());
        assert!(MaxPool2d { window: 2 }.forward(&RealTensor::zeros(&[1, 1, 1, 4])).is_err());
    }

    #[test]
    fn non_finite_input_trips_numerical_error() {
        let mut store = ParamStore::new(0);
        let d = Dense::new(&mut store, "fc", 2, 2);
        let x = RealTensor::from_vec(&[1, 2], vec![f64::NAN, 1.0]).unwrap();
        assert!(matches!(d.forward(&store, &x), Err(Error::Numerical(_))));
    }

    #[test]
    fn forward_has_no_hidden_state() {
        let mut store = ParamStore::new(4);
        let c = Conv2d::new(&mut store, "conv", 1, 3, 3, 2);
        let x = random_tensor(&[2, 1, 9, 9], &mut seeded(2));
        assert_eq!(c.forward(&store, &x).unwrap(), c.forward(&store, &x).unwrap());
    }
}
