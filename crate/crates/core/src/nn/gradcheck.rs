//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use super::params::ParamStore;
use crate::error::Result;
use crate::rng::seeded;

/// Denominator floor of the relative error, so near-zero gradients are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

/// Central differences of a scalar function at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + h;
            let plus = f(&buf);
            buf[i] = x[i] - h;
            let minus = f(&buf);
            buf[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Largest number of coordinates probed per parameter tensor; `None`
    /// probes every coordinate.
    pub max_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            max_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares the gradients that `loss` accumulates into the store against
/// central differences of the loss value.
///
/// `loss` must be a deterministic function of the parameter values (freeze
/// any noise draws) and must add its gradients into the store it is given.
pub fn grad_check(
    store: &ParamStore,
    opts: &GradCheckOptions,
    mut loss: impl FnMut(&mut ParamStore) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut analytic = store.clone();
    analytic.zero_grads();
    loss(&mut analytic)?;

    let mut probe = store.clone();
    let mut rng = seeded(opts.seed);
    let mut params = Vec::new();
    for id in store.ids() {
        let n = store.value(id).len();
        let coords: Vec<usize> = match opts.max_per_param {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let mut worst = 0.0f64;
        for &i in &coords {
            let x = store.value(id).data[i];
            probe.value_mut(id).data[i] = x + opts.step;
            let plus = loss(&mut probe)?;
            probe.value_mut(id).data[i] = x - opts.step;
            let minus = loss(&mut probe)?;
            probe.value_mut(id).data[i] = x;
            let numeric = (plus - minus) / (2.0 * opts.step);
            worst = worst.max(relative_error(analytic.grad(id).data[i], numeric, REL_FLOOR));
        }
        params.push(ParamCheck {
            name: store.name(id).to_string(),
            checked: coords.len(),
            max_rel_error: worst,
        });
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        params,
        max_rel_error,
    })
}
