use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::RealTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const ADAM_DEFAULT: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::ADAM_DEFAULT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 64,
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            let unit = 0.0..1.0;
            if !unit.contains(&beta1) || !unit.contains(&beta2) || !(eps > 0.0) {
                return Err(Error::Config(format!(
                    "invalid adam parameters beta1={beta1} beta2={beta2} eps={eps}"
                )));
            }
        }
        Ok(())
    }
}

/// Optimizer state (Adam moments) for one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    m: Vec<RealTensor>,
    v: Vec<RealTensor>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, store: &ParamStore) -> Self {
        let zeros = |s: &ParamStore| s.ids().map(|id| RealTensor::zeros(&s.value(id).shape)).collect::<Vec<_>>();
        let adam = matches!(cfg.optimizer, OptimizerKind::Adam { .. });
        Self {
            kind: cfg.optimizer,
            learning_rate: cfg.learning_rate,
            step: 0,
            m: if adam { zeros(store) } else { Vec::new() },
            v: if adam { zeros(store) } else { Vec::new() },
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// The store is left untouched if any updated value would be non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for &id in &ids {
            store.grad(id).ensure_finite(store.name(id)).map_err(|_| {
                Error::numerical(format!("non-finite gradient for {}", store.name(id)))
            })?;
        }
        self.step += 1;
        let lr = self.learning_rate;
        let mut updates = Vec::with_capacity(ids.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for &id in &ids {
                    let (p, g) = (store.value(id), store.grad(id));
                    updates.push(p.data.iter().zip(&g.data).map(|(p, g)| p - lr * g).collect::<Vec<_>>());
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (i, &id) in ids.iter().enumerate() {
                    let (p, g) = (store.value(id), store.grad(id));
                    let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
                    let mut next = Vec::with_capacity(p.len());
                    for j in 0..p.len() {
                        let gj = g.data[j];
                        m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                        let mhat = m[j] / c1;
                        let vhat = v[j] / c2;
                        next.push(p.data[j] - lr * mhat / (vhat.sqrt() + eps));
                    }
                    updates.push(next);
                }
            }
        }
        if updates.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite parameter update"));
        }
        for (&id, u) in ids.iter().zip(updates) {
            store.value_mut(id).data = u;
        }
        store.zero_grads();
        Ok(())
    }
}
