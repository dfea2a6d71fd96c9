use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::embeddings::{embed_tokens, CharCnnParams, EmbeddingLayerParams};
use crate::error::{Error, Result};
use crate::params::{glorot, param_struct, trainable_zeros};
use crate::recurrent::{apply_dropout, run_bidirectional, CellParams, Mode};
use crate::text::{encode_batch, EmbeddingTable, EncodedBatch, HeadlineExample, Label, Vocabulary};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-7;

param_struct! {
    /// Sigmoid output node: `weight: [2H × 1]`, `bias: [1]`.
    pub struct OutputLayer {
        pub weight,
        pub bias,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub embedding: EmbeddingLayerParams<T>,
    pub forward: CellParams<T>,
    pub backward: CellParams<T>,
    pub output: OutputLayer<T>,
}

impl<T> ModelParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ModelParams<U> {
        ModelParams {
            embedding: self.embedding.map(f),
            forward: self.forward.map(f),
            backward: self.backward.map(f),
            output: self.output.map(f),
        }
    }

    pub fn visit(&self, f: &mut dyn FnMut(String, &T)) {
        self.embedding.visit("embedding.", f);
        self.forward.visit("forward.", f);
        self.backward.visit("backward.", f);
        self.output.visit("output.", f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut T)) {
        self.embedding.visit_mut("embedding.", f);
        self.forward.visit_mut("forward.", f);
        self.backward.visit_mut("backward.", f);
        self.output.visit_mut("output.", f);
    }
}

impl ModelParams<Tensor> {
    /// Fresh parameters. `word_matrix` (`[word_count × d_w]`) is required exactly
    /// when the feature mode uses word vectors.
    pub fn init(
        config: &ModelConfig,
        vocab: &Vocabulary,
        word_matrix: Option<Tensor>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let word_table = match (config.features.uses_words(), word_matrix) {
            (true, Some(m)) => {
                if m.shape().len() != 2 || m.shape()[0] != vocab.word_count() {
                    return Err(Error::Config(format!(
                        "word table shape {:?} does not match {} vocabulary words",
                        m.shape(),
                        vocab.word_count()
                    )));
                }
                Some(m.with_grad(config.fine_tune_words))
            }
            (true, None) => {
                return Err(Error::Config(format!(
                    "feature mode {} needs pretrained word vectors",
                    config.features
                )))
            }
            (false, _) => None,
        };
        let char_cnn = if config.features.uses_chars() {
            Some(CharCnnParams::init(vocab.char_count(), config.char_cnn(), rng)?)
        } else {
            None
        };
        let input = word_table.as_ref().map_or(0, |w| w.shape()[1])
            + char_cnn.as_ref().map_or(0, CharCnnParams::out_channels);
        let h = config.hidden;
        let forward = CellParams::init(config.arch, input, h, config.peephole, rng);
        let backward = CellParams::init(config.arch, input, h, config.peephole, rng);
        let output = OutputLayer {
            weight: glorot(&[2 * h, 1], 2 * h, 1, rng),
            bias: trainable_zeros(&[1]),
        };
        Ok(Self {
            embedding: EmbeddingLayerParams { char_cnn, word_table },
            forward,
            backward,
            output,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelParams<Var> {
        self.map(&mut |t| tape.leaf(t))
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| {
            if t.requires_grad() {
                n += t.numel()
            }
        });
        n
    }

    /// Every tensor with its dotted name, in a fixed order. Clones share storage.
    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name, t.clone())));
        out
    }
}

/// Embed, dropout, bidirectional recurrence, dropout, linear, sigmoid.
/// Returns probabilities `[B × 1]`.
pub fn forward_headline(
    tape: &mut Tape,
    batch: &EncodedBatch,
    params: &ModelParams<Var>,
    dropout: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Var> {
    let steps = embed_tokens(tape, batch, &params.embedding)?;
    let steps = steps
        .into_iter()
        .map(|x| apply_dropout(tape, x, dropout, mode, rng))
        .collect::<Result<Vec<_>>>()?;
    let repr = run_bidirectional(tape, &steps, &batch.word_lengths, &params.forward, &params.backward)?;
    let repr = apply_dropout(tape, repr, dropout, mode, rng)?;
    let logits = tape.matmul(repr, params.output.weight)?;
    let logits = tape.add_row_bias(logits, params.output.bias)?;
    tape.sigmoid(logits)
}

/// Mean binary cross-entropy with clamped probabilities.
pub fn bce_loss(tape: &mut Tape, probs: Var, labels: &[f64]) -> Result<Var> {
    tape.bce(probs, labels, BCE_EPS)
}

/// A trained (or freshly initialised) model together with the vocabulary it
/// was built against. This is exactly what a checkpoint stores.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub probability: f64,
}

impl Classifier {
    /// Initialises parameters from `config.seed`.
    pub fn new(config: ModelConfig, vocab: Vocabulary, words: Option<&EmbeddingTable>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(config, vocab, words, &mut rng)
    }

    pub fn with_rng(
        config: ModelConfig,
        vocab: Vocabulary,
        words: Option<&EmbeddingTable>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let matrix = if config.features.uses_words() {
            words.map(|w| w.to_matrix(&vocab))
        } else {
            None
        };
        let params = ModelParams::init(&config, &vocab, matrix, rng)?;
        Ok(Self { config, vocab, params })
    }

    /// Eval-mode probabilities for one encoded batch.
    pub fn probabilities(&self, batch: &EncodedBatch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        // Eval mode never draws from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = forward_headline(&mut tape, batch, &bound, self.config.dropout, Mode::Eval, &mut rng)?;
        Ok(tape.value(p).to_vec())
    }

    /// Eval-mode probabilities for many examples, batched and fanned out across
    /// threads. Output order follows input order.
    pub fn score(&self, examples: &[&HeadlineExample]) -> Result<Vec<f64>> {
        let chunks: Vec<Vec<f64>> = examples
            .par_chunks(self.config.batch_size.max(1))
            .map(|chunk| {
                let batch = encode_batch(chunk, &self.vocab, self.config.limits())?;
                self.probabilities(&batch)
            })
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }

    /// Classifies raw headlines. `label` is clickbait iff `probability ≥ threshold`.
    /// Headlines without any token are reported individually.
    pub fn predict(&self, texts: &[&str], threshold: f64) -> Vec<Result<Prediction>> {
        let examples: Vec<HeadlineExample> = texts
            .iter()
            .map(|t| HeadlineExample::new(t, Label::NonClickbait))
            .collect();
        let valid: Vec<&HeadlineExample> = examples.iter().filter(|e| !e.tokens.is_empty()).collect();
        let mut scores = match self.score(&valid) {
            Ok(s) => s.into_iter(),
            Err(e) => {
                let msg = e.to_string();
                return texts.iter().map(|_| Err(Error::Numeric(msg.clone()))).collect();
            }
        };
        examples
            .iter()
            .map(|ex| {
                if ex.tokens.is_empty() {
                    return Err(Error::Data(format!("headline {:?} has no tokens", ex.raw_text)));
                }
                let probability = scores.next().expect("one score per valid headline");
                let label = if probability >= threshold {
                    Label::Clickbait
                } else {
                    Label::NonClickbait
                };
                Ok(Prediction { label, probability })
            })
            .collect()
    }
}
