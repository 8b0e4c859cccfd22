use rand::Rng;

use super::RealTensor;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, SimRng, TAG_INIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named parameters with matching gradient buffers.
///
/// Initialization draws come from a generator seeded by `init_seed`, in
/// registration order, so a model built the same way twice is identical.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<RealTensor>,
    grads: Vec<RealTensor>,
    init_seed: u64,
    init_rng: SimRng,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.values == other.values && self.grads == other.grads
    }
}

impl ParamStore {
    pub fn new(init_seed: u64) -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            init_seed,
            init_rng: derive_rng(init_seed, &[TAG_INIT]),
        }
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    fn push(&mut self, name: &str, value: RealTensor) -> ParamId {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        self.names.push(name.to_string());
        self.grads.push(RealTensor::zeros(&value.shape));
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_glorot(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| self.init_rng.random_range(-limit..=limit))
            .collect();
        self.push(name, RealTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.push(name, RealTensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &RealTensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut RealTensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &RealTensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut RealTensor {
        &mut self.grads[id.0]
    }

    /// Parameter value and gradient buffer at once.
    pub fn split_mut(&mut self, id: ParamId) -> (&RealTensor, &mut RealTensor) {
        (&self.values[id.0], &mut self.grads[id.0])
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// `(name, value)` pairs in registration order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &RealTensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrites values from `(name, tensor)` pairs; every parameter must be
    /// present with its registered shape.
    pub fn load_values(&mut self, tensors: &[(String, RealTensor)]) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let (_, t) = tensors
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::domain(format!("checkpoint lacks parameter {name}")))?;
            if t.shape != self.values[i].shape {
                return Err(Error::domain(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    t.shape, self.values[i].shape
                )));
            }
            self.values[i] = t.clone();
        }
        Ok(())
    }
}
