//! Shared test support: finite differences, straight-line transcriptions of the
//! model equations, brute-force metrics and the synthetic marker-token task.
//! Used by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod suites;
pub mod synth;

use std::collections::{BTreeMap, HashMap};

use baitnet::autodiff::{Gradients, Tape, Tensor, Var};
use baitnet::classifier::NamedParams;
use baitnet::Result;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_TOL: f64 = 1e-7;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Default, Clone)]
pub struct GradCheck {
    pub checked: usize,
    /// Largest relative error among components with magnitude above 1e-6.
    pub worst_rel: f64,
    pub worst_abs: f64,
    pub failures: Vec<String>,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }

    pub fn merge(&mut self, other: GradCheck) {
        self.checked += other.checked;
        self.worst_rel = self.worst_rel.max(other.worst_rel);
        self.worst_abs = self.worst_abs.max(other.worst_abs);
        self.failures.extend(other.failures);
    }
}

/// Checks every component of every trainable tensor in `params`.
///
/// `f` returns the scalar loss and its gradients keyed by parameter name. It
/// must be deterministic, since it is re-run for each perturbation.
pub fn fd_check<P, F>(label: &str, params: &P, f: F) -> GradCheck
where
    P: NamedParams + Clone,
    F: Fn(&P) -> Result<(f64, HashMap<String, Vec<f64>>)>,
{
    let mut report = GradCheck::default();
    let (_, analytic) = match f(params) {
        Ok(v) => v,
        Err(e) => {
            report.failures.push(format!("{label}: {e}"));
            return report;
        }
    };
    let mut targets = Vec::new();
    params.visit_named(&mut |name, t| {
        if t.requires_grad() {
            targets.push((name, t.numel()));
        }
    });
    let shifted = |name: &str, i: usize, delta: f64| -> Result<f64> {
        let mut p = params.clone();
        p.visit_named_mut(&mut |n, t| {
            if n == name {
                t.data_mut()[i] += delta;
            }
        });
        Ok(f(&p)?.0)
    };
    for (name, numel) in targets {
        let zeros = vec![0.0; numel];
        let g = analytic.get(&name).unwrap_or(&zeros);
        for i in 0..numel {
            let numeric = match (shifted(&name, i, FD_STEP), shifted(&name, i, -FD_STEP)) {
                (Ok(up), Ok(down)) => (up - down) / (2.0 * FD_STEP),
                (Err(e), _) | (_, Err(e)) => {
                    report.failures.push(format!("{label}: {name}[{i}]: {e}"));
                    continue;
                }
            };
            let a = g[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            report.checked += 1;
            report.worst_abs = report.worst_abs.max(abs);
            if a.abs().max(numeric.abs()) > 1e-6 {
                report.worst_rel = report.worst_rel.max(rel);
            }
            if abs > FD_ABS_TOL && rel > FD_REL_TOL {
                report
                    .failures
                    .push(format!("{label}: {name}[{i}] analytic {a:e} numeric {numeric:e} rel {rel:e}"));
            }
        }
    }
    report
}

pub type ParamMap = BTreeMap<String, Tensor>;

pub fn bind_map(tape: &mut Tape, params: &ParamMap) -> BTreeMap<String, Var> {
    params.iter().map(|(k, t)| (k.clone(), tape.leaf(t))).collect()
}

pub fn grads_of(grads: &Gradients, vars: &BTreeMap<String, Var>) -> HashMap<String, Vec<f64>> {
    vars.iter()
        .filter_map(|(k, &v)| grads.get(v).map(|g| (k.clone(), g.to_vec())))
        .collect()
}

/// Collects gradients for any parameter structure with a `visit` over `Var`s.
pub fn grads_by_visit(grads: &Gradients, visit: impl FnOnce(&mut dyn FnMut(String, &Var))) -> HashMap<String, Vec<f64>> {
    let mut out = HashMap::new();
    visit(&mut |name, &v| {
        if let Some(g) = grads.get(v) {
            out.insert(name, g.to_vec());
        }
    });
    out
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

pub fn trainable(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    uniform(shape, lo, hi, rng).with_grad(true)
}

/// Reduces any output to a scalar through fixed random weights, so that every
/// output component contributes a distinct amount to the loss.
pub fn weighted_sum(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}
