use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_update, clip_global_norm, AdamConfig, AdamState};
use super::config::ModelConfig;
use super::model::{bce_loss, forward_headline, Classifier, ModelParams};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::recurrent::Mode;
use crate::text::{encode_batch, EmbeddingTable, HeadlineExample, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Example-weighted mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    /// Eval-mode loss on the held-out split, when early stopping is on.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Classifier,
    pub log: Vec<EpochLog>,
}

/// Trains a fresh model. Equivalent to [`train_with`] with no progress hook.
pub fn train(
    data: &[HeadlineExample],
    config: &ModelConfig,
    vocab: Vocabulary,
    words: Option<&EmbeddingTable>,
) -> Result<TrainOutcome> {
    train_with(data, config, vocab, words, &mut |_| {})
}

/// Mini-batch Adam on mean BCE. One generator seeded from `config.seed` drives
/// initialisation, the validation split, per-epoch shuffles and dropout, so the
/// whole run is a pure function of its inputs.
///
/// With early stopping, 10% of `data` is held out, training stops after
/// `patience` epochs without a validation improvement and the best parameters
/// are returned.
pub fn train_with(
    data: &[HeadlineExample],
    config: &ModelConfig,
    vocab: Vocabulary,
    words: Option<&EmbeddingTable>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Classifier::with_rng(config.clone(), vocab, words, &mut rng)?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut val_idx = Vec::new();
    if config.early_stopping {
        order.shuffle(&mut rng);
        let n_val = data.len() / 10;
        if n_val == 0 || n_val == data.len() {
            return Err(Error::Data(format!(
                "early stopping needs at least 10 examples, got {}",
                data.len()
            )));
        }
        val_idx = order.split_off(data.len() - n_val);
        order.sort_unstable();
    }
    let val: Vec<&HeadlineExample> = val_idx.iter().map(|&i| &data[i]).collect();

    let adam = AdamConfig {
        lr: config.lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.eps,
    };
    let mut state = AdamState::new();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let examples: Vec<&HeadlineExample> = chunk.iter().map(|&i| &data[i]).collect();
            let loss = train_step(&mut model, &examples, &mut state, adam, &mut rng)
                .map_err(|e| annotate(e, epoch, b + 1))?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(eval_loss(&model, &val)?)
        };
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
        };
        on_epoch(&entry);
        log.push(entry);

        if let Some(v) = val_loss {
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(TrainOutcome { model, log })
}

fn annotate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// Forward, loss, backward, clip and one Adam step. Returns the batch loss.
pub fn train_step(
    model: &mut Classifier,
    examples: &[&HeadlineExample],
    state: &mut AdamState,
    adam: AdamConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let batch = encode_batch(examples, &model.vocab, model.config.limits())?;
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let probs = forward_headline(&mut tape, &batch, &bound, model.config.dropout, Mode::Train, rng)?;
    let loss = bce_loss(&mut tape, probs, &batch.label_values())?;
    let value = tape.value(loss)[0];
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let grads = tape.backward(loss)?;
    let mut named = HashMap::new();
    bound.visit(&mut |name, &var| {
        if let Some(g) = grads.get(var) {
            named.insert(name, g.to_vec());
        }
    });
    clip_global_norm(&mut named, model.config.grad_clip);
    adam_update(&mut model.params, &named, state, adam)?;
    Ok(value)
}

/// Eval-mode mean BCE over `examples`.
pub fn eval_loss(model: &Classifier, examples: &[&HeadlineExample]) -> Result<f64> {
    let probs = model.score(examples)?;
    let mut tape = Tape::new();
    let p = tape.constant(crate::autodiff::Tensor::new(&[probs.len()], probs)?);
    let labels: Vec<f64> = examples.iter().map(|e| e.label.as_f64()).collect();
    let loss = bce_loss(&mut tape, p, &labels)?;
    Ok(tape.value(loss)[0])
}
