//! Check suites shared by the integration tests and the acceptance runner.
//! Each returns a short summary on success and a description of the first
//! problems on failure.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use baitnet::autodiff::{Tape, Tensor, Var};
use baitnet::classifier::{
    adam_update, bce_loss, forward_headline, load_checkpoint, save_checkpoint, train, AdamConfig, AdamState,
    Classifier, Features, ModelConfig, ModelParams, NamedParams,
};
use baitnet::cli::{run_cli_with, Streams};
use baitnet::embeddings::{char_cnn_encode_batch, CharCnnConfig, CharCnnParams};
use baitnet::evaluation::{confusion_metrics, roc_auc, MetricsReport};
use baitnet::recurrent::{cell_step, run_direction, CellKind, CellParams, Mode, Peephole, StepState};
use baitnet::text::{build_vocab, encode_batch, EmbeddingTable, EncodeLimits, HeadlineExample, Label, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles;
use super::synth::{marker_task, MarkerTask};
use super::{bind_map, fd_check, grads_by_visit, grads_of, trainable, weighted_sum, GradCheck, ParamMap};

pub type Outcome = std::result::Result<String, String>;

fn finish(check: GradCheck) -> Outcome {
    if check.passed() {
        Ok(format!(
            "{} components, worst rel. err {:.1e}, worst abs. err {:.1e}",
            check.checked, check.worst_rel, check.worst_abs
        ))
    } else if check.checked == 0 && check.failures.is_empty() {
        Err("nothing was checked".into())
    } else {
        let shown: Vec<_> = check.failures.iter().take(5).cloned().collect();
        Err(format!("{} mismatches: {}", check.failures.len(), shown.join("; ")))
    }
}

// ---------------------------------------------------------------- gradients

fn reduce_weights(numel: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(numel as u64 ^ 0xA5A5);
    Tensor::from_fn(&[numel], |_| rng.gen_range(-1.0..1.0))
}

/// Runs one primitive-op case: `build` maps bound leaves to an output which is
/// reduced to a scalar by a fixed random weighting.
fn op_case(label: &str, params: ParamMap, build: impl Fn(&mut Tape, &BTreeMap<String, Var>) -> baitnet::Result<Var>) -> GradCheck {
    fd_check(label, &params, |p| {
        let mut tape = Tape::new();
        let vars = bind_map(&mut tape, p);
        let out = build(&mut tape, &vars)?;
        let numel = tape.value(out).len();
        let flat = tape.reshape(out, &[numel])?;
        let loss = weighted_sum(&mut tape, flat, &reduce_weights(numel))?;
        let value = tape.value(loss)[0];
        let grads = tape.backward(loss)?;
        Ok((value, grads_of(&grads, &vars)))
    })
}

/// Values bounded away from zero, so ReLU kinks stay outside the FD stencil.
fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen() {
            m
        } else {
            -m
        }
    })
    .with_grad(true)
}

pub fn primitive_ops() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut r = GradCheck::default();
    let map = |entries: Vec<(&str, Tensor)>| -> ParamMap { entries.into_iter().map(|(k, t)| (k.to_string(), t)).collect() };

    r.merge(op_case(
        "matmul",
        map(vec![("a", trainable(&[3, 4], -1.0, 1.0, &mut rng)), ("b", trainable(&[4, 2], -1.0, 1.0, &mut rng))]),
        |t, v| t.matmul(v["a"], v["b"]),
    ));
    for (name, f) in [
        ("sigmoid", Tape::sigmoid as fn(&mut Tape, Var) -> baitnet::Result<Var>),
        ("tanh", Tape::tanh),
        ("relu", Tape::relu),
    ] {
        r.merge(op_case(name, map(vec![("a", away_from_zero(&[2, 3], &mut rng))]), move |t, v| f(t, v["a"])));
    }
    r.merge(op_case(
        "add",
        map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng)), ("b", trainable(&[2, 3], -1.0, 1.0, &mut rng))]),
        |t, v| t.add(v["a"], v["b"]),
    ));
    r.merge(op_case(
        "mul",
        map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng)), ("b", trainable(&[2, 3], -1.0, 1.0, &mut rng))]),
        |t, v| t.mul(v["a"], v["b"]),
    ));
    r.merge(op_case(
        "mul_self",
        map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng))]),
        |t, v| t.mul(v["a"], v["a"]),
    ));
    r.merge(op_case(
        "add_row_bias",
        map(vec![("a", trainable(&[3, 4], -1.0, 1.0, &mut rng)), ("b", trainable(&[4], -1.0, 1.0, &mut rng))]),
        |t, v| t.add_row_bias(v["a"], v["b"]),
    ));
    r.merge(op_case("affine", map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng))]), |t, v| {
        t.affine(v["a"], -1.5, 0.3)
    }));
    r.merge(op_case(
        "concat0",
        map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng)), ("b", trainable(&[1, 3], -1.0, 1.0, &mut rng))]),
        |t, v| t.concat(&[v["a"], v["b"], v["a"]], 0),
    ));
    r.merge(op_case(
        "concat1",
        map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng)), ("b", trainable(&[2, 2], -1.0, 1.0, &mut rng))]),
        |t, v| t.concat(&[v["b"], v["a"]], 1),
    ));
    r.merge(op_case("narrow", map(vec![("a", trainable(&[3, 5], -1.0, 1.0, &mut rng))]), |t, v| {
        t.narrow(v["a"], 1, 1, 3)
    }));
    r.merge(op_case("split", map(vec![("a", trainable(&[4, 2], -1.0, 1.0, &mut rng))]), |t, v| {
        let parts = t.split(v["a"], 0, &[1, 3])?;
        let tail = t.sum(parts[1])?;
        let head = t.reshape(parts[0], &[2])?;
        let tail2 = t.concat(&[tail, tail], 0)?;
        t.mul(head, tail2)
    }));
    r.merge(op_case("reshape", map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng))]), |t, v| {
        let b = t.reshape(v["a"], &[3, 2])?;
        t.matmul(v["a"], b)
    }));
    r.merge(op_case("gather_rows", map(vec![("e", trainable(&[5, 3], -1.0, 1.0, &mut rng))]), |t, v| {
        t.gather_rows(v["e"], &[0, 2, 2, 4, 2])
    }));
    r.merge(op_case(
        "conv1d",
        map(vec![
            ("x", trainable(&[2, 5, 3], -1.0, 1.0, &mut rng)),
            ("w", trainable(&[3, 3, 4], -1.0, 1.0, &mut rng)),
            ("b", trainable(&[4], -1.0, 1.0, &mut rng)),
        ]),
        |t, v| t.conv1d(v["x"], v["w"], v["b"], &[5, 3]),
    ));
    r.merge(op_case(
        "conv1d_k5",
        map(vec![
            ("x", trainable(&[1, 4, 2], -1.0, 1.0, &mut rng)),
            ("w", trainable(&[5, 2, 3], -1.0, 1.0, &mut rng)),
            ("b", trainable(&[3], -1.0, 1.0, &mut rng)),
        ]),
        |t, v| t.conv1d(v["x"], v["w"], v["b"], &[4]),
    ));
    r.merge(op_case("max_over_time", map(vec![("x", trainable(&[4, 3], -1.0, 1.0, &mut rng))]), |t, v| {
        t.max_over_time(v["x"], 3)
    }));
    r.merge(op_case(
        "max_over_time_batched",
        map(vec![("x", trainable(&[2, 4, 3], -1.0, 1.0, &mut rng))]),
        |t, v| t.max_over_time_batched(v["x"], &[4, 2]),
    ));
    r.merge(op_case("sum", map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng))]), |t, v| t.sum(v["a"])));
    r.merge(op_case("mean", map(vec![("a", trainable(&[2, 3], -1.0, 1.0, &mut rng))]), |t, v| t.mean(v["a"])));
    r.merge(op_case("bce", map(vec![("p", trainable(&[4], 0.05, 0.95, &mut rng))]), |t, v| {
        t.bce(v["p"], &[1.0, 0.0, 0.0, 1.0], 1e-7)
    }));
    r.merge(op_case("bce_sigmoid", map(vec![("a", trainable(&[3, 1], -3.0, 3.0, &mut rng))]), |t, v| {
        let p = t.sigmoid(v["a"])?;
        t.bce(p, &[1.0, 0.0, 1.0], 1e-7)
    }));
    r
}

/// A cell driven through three steps, with the inputs themselves trainable.
#[derive(Clone)]
struct Unrolled {
    cell: CellParams,
    xs: Vec<Tensor>,
}

impl NamedParams for Unrolled {
    fn visit_named(&self, f: &mut dyn FnMut(String, &Tensor)) {
        self.cell.visit("cell.", f);
        for (i, x) in self.xs.iter().enumerate() {
            f(format!("x{i}"), x);
        }
    }

    fn visit_named_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.cell.visit_mut("cell.", f);
        for (i, x) in self.xs.iter_mut().enumerate() {
            f(format!("x{i}"), x);
        }
    }
}

fn randomize(p: &mut impl NamedParams, rng: &mut impl Rng, scale: f64) {
    p.visit_named_mut(&mut |_, t| {
        for v in t.data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    });
}

pub fn cells_unrolled() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut r = GradCheck::default();
    let (d, h, b) = (3, 4, 2);
    let cases = [
        (CellKind::Rnn, Peephole::Full),
        (CellKind::Gru, Peephole::Full),
        (CellKind::Lstm, Peephole::Full),
        (CellKind::Lstm, Peephole::Diagonal),
    ];
    for (kind, peep) in cases {
        let mut case = Unrolled {
            cell: CellParams::init(kind, d, h, peep, &mut rng),
            xs: (0..3).map(|_| trainable(&[b, d], -1.0, 1.0, &mut rng)).collect(),
        };
        randomize(&mut case, &mut rng, 0.8);
        for (lengths, reverse) in [(vec![3, 3], false), (vec![3, 2], false), (vec![2, 3], true)] {
            let label = format!("{} {} lengths {lengths:?} reverse {reverse}", kind.as_str(), peep.as_str());
            r.merge(fd_check(&label, &case, |p| {
                let mut tape = Tape::new();
                let cell = p.cell.map(&mut |t| tape.leaf(t));
                let xs: Vec<Var> = p.xs.iter().map(|x| tape.leaf(x)).collect();
                let out = run_direction(&mut tape, &xs, &lengths, &cell, reverse)?;
                let flat = tape.reshape(out, &[b * h])?;
                let loss = weighted_sum(&mut tape, flat, &reduce_weights(b * h))?;
                let value = tape.value(loss)[0];
                let grads = tape.backward(loss)?;
                let mut named = grads_by_visit(&grads, |f| cell.visit("cell.", f));
                for (i, &x) in xs.iter().enumerate() {
                    if let Some(g) = grads.get(x) {
                        named.insert(format!("x{i}"), g.to_vec());
                    }
                }
                Ok((value, named))
            }));
        }
    }
    r
}

#[derive(Clone)]
struct CnnCase(CharCnnParams);

impl NamedParams for CnnCase {
    fn visit_named(&self, f: &mut dyn FnMut(String, &Tensor)) {
        self.0.visit("", f);
    }

    fn visit_named_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.0.visit_mut("", f);
    }
}

pub fn char_cnn() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = CharCnnConfig {
        char_dim: 4,
        channels: 5,
        kernel: 3,
        layers: 3,
    };
    let mut case = CnnCase(CharCnnParams::init(12, cfg, &mut rng).unwrap());
    // Positive biases keep most units away from the ReLU kink.
    case.0.visit_mut("", &mut |name, t| {
        for v in t.data_mut() {
            *v = if name.ends_with("bias") {
                rng.gen_range(0.05..0.3)
            } else {
                rng.gen_range(-0.9..0.9)
            };
        }
    });
    let words: Vec<Vec<usize>> = vec![vec![2, 5, 7, 3, 11], vec![4], vec![9, 9, 2]];
    fd_check("char-cnn", &case, |p| {
        let mut tape = Tape::new();
        let bound = p.0.map(&mut |t| tape.leaf(t));
        let refs: Vec<&[usize]> = words.iter().map(Vec::as_slice).collect();
        let out = char_cnn_encode_batch(&mut tape, &refs, &bound)?;
        let numel = tape.value(out).len();
        let flat = tape.reshape(out, &[numel])?;
        let loss = weighted_sum(&mut tape, flat, &reduce_weights(numel))?;
        let value = tape.value(loss)[0];
        let grads = tape.backward(loss)?;
        Ok((value, grads_by_visit(&grads, |f| bound.visit("", f))))
    })
}

fn tiny_corpus() -> Vec<HeadlineExample> {
    [
        ("you wont believe it", Label::Clickbait),
        ("senate passes bill", Label::NonClickbait),
        ("cats", Label::Clickbait),
    ]
    .iter()
    .map(|(t, l)| HeadlineExample::new(t, *l))
    .collect()
}

fn tiny_table(vocab: &Vocabulary, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(dim);
    for w in vocab.corpus_words() {
        table.insert(w, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    }
    table
}

pub fn tiny_config(arch: CellKind, features: Features) -> ModelConfig {
    ModelConfig {
        arch,
        features,
        hidden: 4,
        char_dim: 4,
        char_channels: 5,
        char_layers: 2,
        batch_size: 2,
        seed: 3,
        ..ModelConfig::default()
    }
}

/// Full model gradient on B=2 headlines of at most four words.
pub fn full_model() -> GradCheck {
    let data = tiny_corpus();
    let vocab = build_vocab(&data, 1).unwrap();
    let table = tiny_table(&vocab, 3, 1);
    let batch_items: Vec<&HeadlineExample> = data[..2].iter().collect();
    let batch = encode_batch(&batch_items, &vocab, EncodeLimits { max_words: 4, max_chars: 24 }).unwrap();
    let labels = batch.label_values();
    let mut r = GradCheck::default();

    let mut configs: Vec<ModelConfig> = CellKind::ALL
        .iter()
        .flat_map(|&a| Features::ALL.iter().map(move |&f| tiny_config(a, f)))
        .collect();
    configs.push(ModelConfig {
        peephole: Peephole::Diagonal,
        fine_tune_words: true,
        ..tiny_config(CellKind::Lstm, Features::CeWe)
    });

    for cfg in configs {
        let mut model = Classifier::new(cfg.clone(), vocab.clone(), Some(&table)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        model.params.visit_mut(&mut |name, t| {
            if name.contains("bias") || name.ends_with(".b") || name.contains(".b_") {
                for v in t.data_mut() {
                    *v = rng.gen_range(0.05..0.3);
                }
            }
        });
        let label = format!("model {} {}", cfg.arch.as_str(), cfg.features.as_str());
        r.merge(fd_check(&label, &model.params, |p: &ModelParams| {
            let mut tape = Tape::new();
            let bound = p.bind(&mut tape);
            // A fresh generator per evaluation keeps the dropout masks fixed.
            let mut drop_rng = ChaCha8Rng::seed_from_u64(5);
            let probs = forward_headline(&mut tape, &batch, &bound, cfg.dropout, Mode::Train, &mut drop_rng)?;
            let loss = bce_loss(&mut tape, probs, &labels)?;
            let value = tape.value(loss)[0];
            let grads = tape.backward(loss)?;
            Ok((value, grads_by_visit(&grads, |f| bound.visit(f))))
        }));
    }
    r
}

pub fn gradient_suite() -> Outcome {
    let mut all = primitive_ops();
    all.merge(cells_unrolled());
    all.merge(char_cnn());
    all.merge(full_model());
    finish(all)
}

// ---------------------------------------------------------------- equations

fn library_step(p: &CellParams, x: &[f64], h: &[f64], c: Option<&[f64]>, rows: usize) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut tape = Tape::new();
    let bound = p.map(&mut |t| tape.leaf(t));
    let d = x.len() / rows;
    let hd = h.len() / rows;
    let xv = tape.constant(Tensor::new(&[rows, d], x.to_vec()).unwrap());
    let hv = tape.constant(Tensor::new(&[rows, hd], h.to_vec()).unwrap());
    let cv = c.map(|c| tape.constant(Tensor::new(&[rows, hd], c.to_vec()).unwrap()));
    let out = cell_step(&mut tape, xv, StepState { h: hv, c: cv }, &bound).unwrap();
    (tape.value(out.h).to_vec(), out.c.map(|c| tape.value(c).to_vec()))
}

fn max_delta(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Library cells against the straight-line transcriptions on `draws` random
/// draws each. Returns the largest absolute difference seen.
pub fn cell_equations(draws: usize, seed: u64) -> BTreeMap<&'static str, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = BTreeMap::new();
    for (name, kind, peep) in [
        ("rnn", CellKind::Rnn, Peephole::Full),
        ("gru", CellKind::Gru, Peephole::Full),
        ("lstm", CellKind::Lstm, Peephole::Full),
        ("lstm-diagonal", CellKind::Lstm, Peephole::Diagonal),
    ] {
        let mut w: f64 = 0.0;
        for _ in 0..draws {
            let (d, h, rows) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=3));
            let mut p = CellParams::init(kind, d, h, peep, &mut rng);
            p.visit_mut("", &mut |_, t| {
                for v in t.data_mut() {
                    *v = rng.gen_range(-1.5..1.5);
                }
            });
            let x: Vec<f64> = (0..rows * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let hp: Vec<f64> = (0..rows * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cp: Vec<f64> = (0..rows * h).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let lib = library_step(&p, &x, &hp, (kind == CellKind::Lstm).then_some(&cp[..]), rows);
            for r in 0..rows {
                let (xs, hs, cs) = (&x[r * d..(r + 1) * d], &hp[r * h..(r + 1) * h], &cp[r * h..(r + 1) * h]);
                let lib_h = &lib.0[r * h..(r + 1) * h];
                match &p {
                    CellParams::Rnn(q) => w = w.max(max_delta(lib_h, &oracles::rnn(xs, hs, q))),
                    CellParams::Gru(q) => w = w.max(max_delta(lib_h, &oracles::gru(xs, hs, q))),
                    CellParams::Lstm(q) => {
                        let (oh, oc) = oracles::lstm(xs, hs, cs, q);
                        let lib_c = &lib.1.as_ref().unwrap()[r * h..(r + 1) * h];
                        w = w.max(max_delta(lib_h, &oh)).max(max_delta(lib_c, &oc));
                    }
                }
            }
        }
        worst.insert(name, w);
    }
    worst
}

/// Five Adam steps per draw against the straight-line update, plus a 5-step
/// run on a scalar quadratic. Returns the largest absolute difference.
pub fn adam_equations(draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let n = rng.gen_range(1..=5);
        let cfg = AdamConfig {
            lr: rng.gen_range(1e-4..1e-1),
            beta1: rng.gen_range(0.5..0.99),
            beta2: rng.gen_range(0.9..0.9999),
            eps: 10f64.powf(rng.gen_range(-10.0..-6.0)),
        };
        let theta0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let grads: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let expected = oracles::adam_trace(&theta0, &grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
        let mut params = BTreeMap::from([("theta".to_string(), Tensor::new(&[n], theta0).unwrap().with_grad(true))]);
        let mut state = AdamState::new();
        for (g, want) in grads.iter().zip(&expected) {
            let named = HashMap::from([("theta".to_string(), g.clone())]);
            adam_update(&mut params, &named, &mut state, cfg).unwrap();
            worst = worst.max(max_delta(params["theta"].data(), want));
        }
    }

    // f(θ) = (θ - 3)², gradient taken at the current iterate.
    let cfg = AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    };
    let mut params = BTreeMap::from([("theta".to_string(), Tensor::scalar(0.5).with_grad(true))]);
    let mut state = AdamState::new();
    let (mut theta, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
    for t in 1..=5 {
        let g_lib = 2.0 * (params["theta"].data()[0] - 3.0);
        adam_update(&mut params, &HashMap::from([("theta".to_string(), vec![g_lib])]), &mut state, cfg).unwrap();
        let g = 2.0 * (theta - 3.0);
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        theta -= cfg.lr * (m / (1.0 - cfg.beta1.powi(t))) / ((v / (1.0 - cfg.beta2.powi(t))).sqrt() + cfg.eps);
        worst = worst.max((params["theta"].data()[0] - theta).abs());
    }
    worst
}

pub fn equation_suite(draws: usize) -> Outcome {
    const TOL: f64 = 1e-12;
    let mut worst = cell_equations(draws, 2024);
    worst.insert("adam", adam_equations(draws, 2025));
    let summary = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    if worst.values().all(|&v| v <= TOL) {
        Ok(format!("{draws} draws each, max |Δ|: {summary}"))
    } else {
        Err(format!("tolerance {TOL:e} exceeded: {summary}"))
    }
}

// ---------------------------------------------------------------- metrics

/// Random scoring instance with both classes present. Scores come from a
/// coarse grid half the time so ties are common.
pub fn random_instance(rng: &mut impl Rng) -> (Vec<f64>, Vec<Label>) {
    let n = rng.gen_range(2..=200);
    let coarse = rng.gen_bool(0.5);
    let mut labels: Vec<Label> = (0..n).map(|_| Label::from_bit(rng.gen_range(0..2)).unwrap()).collect();
    labels[0] = Label::Clickbait;
    labels[1] = Label::NonClickbait;
    let probs = (0..n)
        .map(|_| {
            if coarse {
                f64::from(rng.gen_range(0..=10u8)) / 10.0
            } else {
                rng.gen::<f64>()
            }
        })
        .collect();
    (probs, labels)
}

pub fn auc_instances(count: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let (p, y) = random_instance(&mut rng);
        let got = roc_auc(&p, &y).map_err(|e| format!("instance {i}: {e}"))?;
        let want = oracles::brute_auc(&p, &y).unwrap();
        if got != want {
            return Err(format!("instance {i} (N={}): {got} vs brute force {want}", p.len()));
        }
    }
    Ok(format!("{count} instances exact"))
}

pub fn confusion_cases() -> Outcome {
    let from_preds = |pred: &[u8], truth: &[u8]| -> MetricsReport {
        let p: Vec<f64> = pred.iter().map(|&b| f64::from(b)).collect();
        let y: Vec<Label> = truth.iter().map(|&b| Label::from_bit(b).unwrap()).collect();
        confusion_metrics(&p, &y, 0.5).unwrap()
    };
    // TP=2, FP=1, FN=1, TN=6.
    let r = from_preds(&[1, 1, 1, 0, 0, 0, 0, 0, 0, 0], &[1, 1, 0, 1, 0, 0, 0, 0, 0, 0]);
    let checks = [
        ("counts", (r.true_pos, r.false_pos, r.false_neg, r.true_neg) == (2, 1, 1, 6)),
        ("precision", r.precision == 2.0 / 3.0),
        ("recall", r.recall == 2.0 / 3.0),
        ("f1", r.f1 == 2.0 * (2.0 / 3.0) * (2.0 / 3.0) / (4.0 / 3.0)),
        ("accuracy", r.accuracy == 0.8),
    ];
    let perfect = from_preds(&[1, 0, 1, 0], &[1, 0, 1, 0]);
    let silent = from_preds(&[0, 0, 0, 0], &[1, 0, 1, 0]);
    let more = [
        ("perfect", [perfect.accuracy, perfect.precision, perfect.recall, perfect.f1] == [1.0; 4]),
        ("no positives predicted", (silent.precision, silent.recall, silent.f1) == (0.0, 0.0, 0.0)),
    ];
    let bad: Vec<&str> = checks.iter().chain(&more).filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if bad.is_empty() {
        Ok("hand cases exact".into())
    } else {
        Err(format!("wrong: {}", bad.join(", ")))
    }
}

pub fn zero_params_half() -> Outcome {
    let data = tiny_corpus();
    let vocab = build_vocab(&data, 1).unwrap();
    let table = tiny_table(&vocab, 3, 2);
    let refs: Vec<&HeadlineExample> = data.iter().collect();
    for arch in CellKind::ALL {
        for features in Features::ALL {
            let mut m = Classifier::new(tiny_config(arch, features), vocab.clone(), Some(&table)).unwrap();
            m.params.visit_mut(&mut |_, t| t.data_mut().fill(0.0));
            let probs = m.score(&refs).map_err(|e| e.to_string())?;
            if probs.iter().any(|&p| p != 0.5) {
                return Err(format!("{} {}: {probs:?}", arch.as_str(), features.as_str()));
            }
        }
    }
    Ok("all 9 configurations give 0.5 exactly".into())
}

pub fn metric_suite(instances: usize) -> Outcome {
    let parts = [auc_instances(instances, 99), confusion_cases(), zero_params_half()];
    let mut notes = Vec::new();
    for p in parts {
        notes.push(p?);
    }
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- learnability

pub struct LearnResult {
    pub accuracy: f64,
    pub seconds: f64,
    pub final_loss: f64,
}

pub fn marker_config(arch: CellKind) -> ModelConfig {
    ModelConfig {
        arch,
        features: Features::CeWe,
        hidden: 32,
        seed: 1234,
        ..ModelConfig::default()
    }
}

pub fn standard_marker_task() -> MarkerTask {
    marker_task(2000, 200, 5, 16, 0.2, 77)
}

pub fn learn_markers(task: &MarkerTask, config: &ModelConfig) -> std::result::Result<LearnResult, String> {
    let start = Instant::now();
    let vocab = build_vocab(&task.train, config.min_count).map_err(|e| e.to_string())?;
    let out = train(&task.train, config, vocab, Some(&task.vectors)).map_err(|e| e.to_string())?;
    let refs: Vec<&HeadlineExample> = task.test.iter().collect();
    let probs = out.model.score(&refs).map_err(|e| e.to_string())?;
    let correct = probs
        .iter()
        .zip(&task.test)
        .filter(|(p, e)| (**p >= 0.5) == e.label.is_positive())
        .count();
    Ok(LearnResult {
        accuracy: correct as f64 / task.test.len() as f64,
        seconds: start.elapsed().as_secs_f64(),
        final_loss: out.log.last().map_or(f64::NAN, |e| e.train_loss),
    })
}

// ---------------------------------------------------------------- files and CLI

pub fn write_tsv(path: &Path, data: &[HeadlineExample]) {
    let body: String = data
        .iter()
        .map(|e| format!("{}\t{}\n", e.label as u8, e.raw_text))
        .collect();
    fs::write(path, body).unwrap();
}

pub fn write_vectors(path: &Path, table: &EmbeddingTable, tokens: &[String]) {
    let mut body = format!("{} {}\n", tokens.len(), table.dim());
    for t in tokens {
        let v = table.get(t).unwrap();
        body.push_str(t);
        for x in v {
            body.push_str(&format!(" {x}"));
        }
        body.push('\n');
    }
    fs::write(path, body).unwrap();
}

/// Runs the CLI in-process and returns `(exit code, stdout, stderr)`.
pub fn cli<S: AsRef<str>>(args: &[S]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err_buf: Vec<u8> = Vec::new();
    let code = {
        let err: Mutex<&mut (dyn std::io::Write + Send)> = Mutex::new(&mut err_buf);
        let mut streams = Streams { out: &mut out, err: &err };
        let argv = std::iter::once("baitnet").chain(args.iter().map(AsRef::as_ref));
        run_cli_with(argv, &mut streams)
    };
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err_buf).unwrap())
}

/// Two identical `crossval` invocations must write byte-identical CSV files.
pub fn crossval_determinism(dir: &Path) -> Outcome {
    let task = marker_task(120, 40, 3, 6, 0.0, 5);
    let data_path = dir.join("cv.tsv");
    let vec_path = dir.join("cv.vec");
    write_tsv(&data_path, &task.train);
    write_vectors(&vec_path, &task.vectors, &task.tokens);
    let mut csvs = Vec::new();
    for run in 0..2 {
        let csv = dir.join(format!("cv{run}.csv"));
        let args = [
            "crossval",
            "--data",
            data_path.to_str().unwrap(),
            "--embeddings",
            vec_path.to_str().unwrap(),
            "--folds",
            "3",
            "--grid",
            "lstm:ce+we,gru:we,rnn:ce",
            "--seed",
            "7",
            "--jobs",
            "4",
            "--hidden",
            "4",
            "--epochs",
            "2",
            "--set",
            "char_channels=4",
            "--set",
            "char_dim=4",
            "--csv",
            csv.to_str().unwrap(),
        ];
        let (code, _, err) = cli(&args);
        if code != 0 {
            return Err(format!("run {run} exited {code}: {err}"));
        }
        csvs.push(fs::read(&csv).map_err(|e| e.to_string())?);
    }
    if csvs[0] == csvs[1] {
        let rows = String::from_utf8_lossy(&csvs[0]).lines().count();
        Ok(format!("{} bytes, {rows} lines identical", csvs[0].len()))
    } else {
        Err("CSV files differ".into())
    }
}

/// Save, load, compare every tensor bit for bit and 100 predictions exactly.
pub fn persistence(dir: &Path) -> Outcome {
    let task = marker_task(300, 60, 3, 8, 1.0 / 3.0, 11);
    let vocab = build_vocab(&task.train, 1).unwrap();
    let cfg = ModelConfig {
        hidden: 8,
        epochs: 2,
        char_channels: 6,
        ..marker_config(CellKind::Lstm)
    };
    let model = train(&task.train, &cfg, vocab, Some(&task.vectors)).map_err(|e| e.to_string())?.model;
    let path = dir.join("model.ckpt");
    save_checkpoint(&model, &path).map_err(|e| e.to_string())?;
    let back = load_checkpoint(&path).map_err(|e| e.to_string())?;

    let a = model.params.named();
    let b = back.params.named();
    if a.len() != b.len() {
        return Err(format!("{} tensors saved, {} loaded", a.len(), b.len()));
    }
    for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
        let same = na == nb
            && ta.shape() == tb.shape()
            && ta.requires_grad() == tb.requires_grad()
            && ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            return Err(format!("tensor {na} changed"));
        }
    }
    if back.config != model.config || back.vocab != model.vocab {
        return Err("config or vocabulary changed".into());
    }
    let heads: Vec<&str> = task.test.iter().take(100).map(|e| e.raw_text.as_str()).collect();
    if heads.len() != 100 {
        return Err(format!("only {} headlines", heads.len()));
    }
    let before: Vec<_> = model.predict(&heads, 0.5).into_iter().map(|p| p.unwrap()).collect();
    let after: Vec<_> = back.predict(&heads, 0.5).into_iter().map(|p| p.unwrap()).collect();
    let same = before
        .iter()
        .zip(&after)
        .all(|(x, y)| x.label == y.label && x.probability.to_bits() == y.probability.to_bits());
    if same {
        Ok(format!("{} tensors bitwise equal, 100 predictions identical", a.len()))
    } else {
        Err("predictions differ after reload".into())
    }
}
