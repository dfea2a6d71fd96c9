//! The embedding layer: a character-CNN word encoder concatenated with a
//! (frozen by default) pretrained word-vector lookup.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{glorot, param_struct, trainable_zeros};
use crate::text::EncodedBatch;

param_struct! {
    /// One same-padded 1-D convolution: `weight: [k × in × out]`, `bias: [out]`.
    pub struct ConvLayer {
        pub weight,
        pub bias,
    }
}

/// Character embeddings followed by a stack of conv + ReLU layers and
/// max-over-time pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct CharCnnParams<T = Tensor> {
    /// `[char_count × d_c]`
    pub char_embed: T,
    pub layers: Vec<ConvLayer<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharCnnConfig {
    pub char_dim: usize,
    pub channels: usize,
    pub kernel: usize,
    pub layers: usize,
}

impl Default for CharCnnConfig {
    fn default() -> Self {
        Self {
            char_dim: 16,
            channels: 32,
            kernel: 3,
            layers: 3,
        }
    }
}

impl CharCnnParams {
    pub fn init(char_count: usize, cfg: CharCnnConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.kernel.is_multiple_of(2) || cfg.layers == 0 || cfg.channels == 0 || cfg.char_dim == 0 {
            return Err(Error::Config(format!(
                "char-CNN needs an odd kernel and positive sizes, got {cfg:?}"
            )));
        }
        let char_embed = glorot(&[char_count, cfg.char_dim], char_count, cfg.char_dim, rng);
        let mut layers = Vec::with_capacity(cfg.layers);
        let mut in_ch = cfg.char_dim;
        for _ in 0..cfg.layers {
            layers.push(ConvLayer {
                weight: glorot(
                    &[cfg.kernel, in_ch, cfg.channels],
                    cfg.kernel * in_ch,
                    cfg.kernel * cfg.channels,
                    rng,
                ),
                bias: trainable_zeros(&[cfg.channels]),
            });
            in_ch = cfg.channels;
        }
        Ok(Self { char_embed, layers })
    }
}

impl<T> CharCnnParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> CharCnnParams<U> {
        CharCnnParams {
            char_embed: f(&self.char_embed),
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &T)) {
        f(format!("{prefix}char_embed"), &self.char_embed);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&format!("{prefix}conv{i}."), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(format!("{prefix}char_embed"), &mut self.char_embed);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("{prefix}conv{i}."), f);
        }
    }
}

impl CharCnnParams<Tensor> {
    pub fn out_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.numel())
    }
}

/// Both embedding channels. A channel is `None` when its feature mode is off.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingLayerParams<T = Tensor> {
    pub char_cnn: Option<CharCnnParams<T>>,
    /// `[word_count × d_w]`
    pub word_table: Option<T>,
}

impl<T> EmbeddingLayerParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> EmbeddingLayerParams<U> {
        EmbeddingLayerParams {
            char_cnn: self.char_cnn.as_ref().map(|c| c.map(f)),
            word_table: self.word_table.as_ref().map(f),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &T)) {
        if let Some(c) = &self.char_cnn {
            c.visit(&format!("{prefix}char."), f);
        }
        if let Some(w) = &self.word_table {
            f(format!("{prefix}word_table"), w);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        if let Some(c) = &mut self.char_cnn {
            c.visit_mut(&format!("{prefix}char."), f);
        }
        if let Some(w) = &mut self.word_table {
            f(format!("{prefix}word_table"), w);
        }
    }
}

/// Encodes a batch of words from their character ids. Returns `[N × out_channels]`.
///
/// Each word must have at least one character; `words[n]` is its unpadded id list.
pub fn char_cnn_encode_batch(tape: &mut Tape, words: &[&[usize]], params: &CharCnnParams<Var>) -> Result<Var> {
    if words.is_empty() {
        return Err(Error::invalid("char_cnn_encode", "no words"));
    }
    if words.iter().any(|w| w.is_empty()) {
        return Err(Error::invalid("char_cnn_encode", "empty character sequence"));
    }
    let lens: Vec<usize> = words.iter().map(|w| w.len()).collect();
    let width = lens.iter().copied().max().unwrap_or(1);
    let mut ids = vec![0usize; words.len() * width];
    for (n, w) in words.iter().enumerate() {
        ids[n * width..n * width + w.len()].copy_from_slice(w);
    }
    let embedded = tape.gather_rows(params.char_embed, &ids)?;
    let char_dim = tape.shape(embedded)[1];
    let mut x = tape.reshape(embedded, &[words.len(), width, char_dim])?;
    for layer in &params.layers {
        let conv = tape.conv1d(x, layer.weight, layer.bias, &lens)?;
        x = tape.relu(conv)?;
    }
    tape.max_over_time_batched(x, &lens)
}

/// Encodes one word. Returns `[out_channels]`.
pub fn char_cnn_encode(tape: &mut Tape, word_char_ids: &[usize], params: &CharCnnParams<Var>) -> Result<Var> {
    let pooled = char_cnn_encode_batch(tape, &[word_char_ids], params)?;
    let width = tape.shape(pooled)[1];
    tape.reshape(pooled, &[width])
}

/// Embeds every position of `batch`. Returns one `[B × D]` matrix per time step,
/// `D = d_w + char_out`, word channel first. Padded positions are all zero.
pub fn embed_tokens(tape: &mut Tape, batch: &EncodedBatch, params: &EmbeddingLayerParams<Var>) -> Result<Vec<Var>> {
    let (b, t_max) = (batch.batch_size, batch.max_words);
    if params.char_cnn.is_none() && params.word_table.is_none() {
        return Err(Error::Config("embedding layer has no enabled channel".into()));
    }

    // Char channel: encode every real word once, then gather per time step from
    // a table whose row 0 is the zero vector used for padding.
    let char_rows = match &params.char_cnn {
        Some(cnn) => {
            let mut words = Vec::new();
            let mut row_of = vec![0usize; b * t_max];
            for i in 0..b {
                for t in 0..batch.word_lengths[i] {
                    let len = batch.char_len(i, t);
                    words.push(&batch.chars(i, t)[..len]);
                    row_of[i * t_max + t] = words.len();
                }
            }
            let encoded = char_cnn_encode_batch(tape, &words, cnn)?;
            let width = tape.shape(encoded)[1];
            let pad = tape.constant(Tensor::zeros(&[1, width]));
            let table = tape.concat(&[pad, encoded], 0)?;
            Some((table, row_of))
        }
        None => None,
    };

    let mut steps = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let mut parts = Vec::with_capacity(2);
        if let Some(table) = params.word_table {
            let ids: Vec<usize> = (0..b).map(|i| batch.word_id(i, t)).collect();
            parts.push(tape.gather_rows(table, &ids)?);
        }
        if let Some((table, row_of)) = &char_rows {
            let rows: Vec<usize> = (0..b).map(|i| row_of[i * t_max + t]).collect();
            parts.push(tape.gather_rows(*table, &rows)?);
        }
        steps.push(tape.concat(&parts, 1)?);
    }
    Ok(steps)
}
