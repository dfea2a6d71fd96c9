use std::collections::{BTreeMap, HashMap};

use super::model::ModelParams;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First/second moment accumulators keyed by parameter name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Anything that can enumerate its tensors by stable name.
pub trait NamedParams {
    fn visit_named(&self, f: &mut dyn FnMut(String, &Tensor));
    fn visit_named_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor));
}

impl NamedParams for BTreeMap<String, Tensor> {
    fn visit_named(&self, f: &mut dyn FnMut(String, &Tensor)) {
        for (k, t) in self {
            f(k.clone(), t);
        }
    }

    fn visit_named_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (k, t) in self {
            f(k.clone(), t);
        }
    }
}

impl NamedParams for ModelParams {
    fn visit_named(&self, f: &mut dyn FnMut(String, &Tensor)) {
        self.visit(f);
    }

    fn visit_named_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.visit_mut(f);
    }
}

/// One bias-corrected Adam step over every trainable tensor that has a
/// gradient. A non-finite or mis-sized gradient aborts before any parameter
/// or moment is touched.
pub fn adam_update(
    params: &mut impl NamedParams,
    grads: &HashMap<String, Vec<f64>>,
    state: &mut AdamState,
    cfg: AdamConfig,
) -> Result<()> {
    let mut failure = None;
    params.visit_named(&mut |name, tensor| {
        if failure.is_some() || !tensor.requires_grad() {
            return;
        }
        let Some(g) = grads.get(&name) else {
            return;
        };
        if g.len() != tensor.numel() {
            failure = Some(Error::shape("adam_update", tensor.shape(), &[g.len()]));
        } else if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            failure = Some(Error::Numeric(format!("non-finite gradient {bad} for parameter {name}")));
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    state.step += 1;
    let t = state.step as i32;
    let correct1 = 1.0 - cfg.beta1.powi(t);
    let correct2 = 1.0 - cfg.beta2.powi(t);
    let moments = &mut state.moments;
    params.visit_named_mut(&mut |name, tensor| {
        if !tensor.requires_grad() {
            return;
        }
        let Some(g) = grads.get(&name) else {
            return;
        };
        let mom = moments.entry(name).or_insert_with(|| Moments {
            m: vec![0.0; g.len()],
            v: vec![0.0; g.len()],
        });
        let theta = tensor.data_mut();
        for i in 0..g.len() {
            mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g[i];
            mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = mom.m[i] / correct1;
            let v_hat = mom.v[i] / correct2;
            theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    });
    Ok(())
}

/// Rescales all gradients together so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut HashMap<String, Vec<f64>>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}
