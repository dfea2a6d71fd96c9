use super::{HeadlineExample, Label, Vocabulary, PAD};
use crate::error::{Error, Result};

/// Length caps applied while encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeLimits {
    /// Headlines longer than this are truncated.
    pub max_words: usize,
    /// Words longer than this many characters are truncated.
    pub max_chars: usize,
}

impl Default for EncodeLimits {
    fn default() -> Self {
        Self {
            max_words: 30,
            max_chars: 24,
        }
    }
}

/// A padded mini-batch. All matrices are flat row-major: `[B×T]` for word-level
/// fields and `[B×T×C]` for character ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub batch_size: usize,
    /// `T`: longest headline in the batch, in words.
    pub max_words: usize,
    /// `C`: longest word in the batch, in characters.
    pub max_chars: usize,
    pub word_ids: Vec<usize>,
    pub char_ids: Vec<usize>,
    pub word_mask: Vec<u8>,
    pub word_lengths: Vec<usize>,
    pub char_lengths: Vec<usize>,
    pub labels: Vec<Label>,
}

impl EncodedBatch {
    pub fn word_id(&self, b: usize, t: usize) -> usize {
        self.word_ids[b * self.max_words + t]
    }

    pub fn mask(&self, b: usize, t: usize) -> bool {
        self.word_mask[b * self.max_words + t] == 1
    }

    pub fn char_len(&self, b: usize, t: usize) -> usize {
        self.char_lengths[b * self.max_words + t]
    }

    /// Character ids of word `t` of example `b`, padding included.
    pub fn chars(&self, b: usize, t: usize) -> &[usize] {
        let at = (b * self.max_words + t) * self.max_chars;
        &self.char_ids[at..at + self.max_chars]
    }

    /// Unpadded word ids of example `b`.
    pub fn sequence(&self, b: usize) -> &[usize] {
        let at = b * self.max_words;
        &self.word_ids[at..at + self.word_lengths[b]]
    }

    pub fn label_values(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.as_f64()).collect()
    }
}

/// Pads `examples` to the batch-wide maximum lengths. Unknown words and
/// characters map to UNK; padded slots hold PAD.
pub fn encode_batch(
    examples: &[&HeadlineExample],
    vocab: &Vocabulary,
    limits: EncodeLimits,
) -> Result<EncodedBatch> {
    if examples.is_empty() {
        return Err(Error::Data("cannot encode an empty batch".into()));
    }
    if let Some(bad) = examples.iter().find(|ex| ex.tokens.is_empty()) {
        return Err(Error::Data(format!(
            "headline {:?} has no tokens",
            bad.raw_text
        )));
    }
    let clipped: Vec<Vec<Vec<char>>> = examples
        .iter()
        .map(|ex| {
            ex.tokens
                .iter()
                .take(limits.max_words.max(1))
                .map(|tok| tok.chars().take(limits.max_chars.max(1)).collect())
                .collect()
        })
        .collect();
    let b = examples.len();
    let t_max = clipped.iter().map(Vec::len).max().unwrap_or(1);
    let c_max = clipped
        .iter()
        .flatten()
        .map(Vec::len)
        .max()
        .unwrap_or(1);

    let mut batch = EncodedBatch {
        batch_size: b,
        max_words: t_max,
        max_chars: c_max,
        word_ids: vec![PAD; b * t_max],
        char_ids: vec![PAD; b * t_max * c_max],
        word_mask: vec![0; b * t_max],
        word_lengths: clipped.iter().map(Vec::len).collect(),
        char_lengths: vec![0; b * t_max],
        labels: examples.iter().map(|ex| ex.label).collect(),
    };
    for (i, (ex, words)) in examples.iter().zip(&clipped).enumerate() {
        for (t, (token, chars)) in ex.tokens.iter().zip(words).enumerate() {
            let slot = i * t_max + t;
            batch.word_ids[slot] = vocab.word_id(token);
            batch.word_mask[slot] = 1;
            batch.char_lengths[slot] = chars.len();
            for (c, &ch) in chars.iter().enumerate() {
                batch.char_ids[slot * c_max + c] = vocab.char_id(ch);
            }
        }
    }
    Ok(batch)
}
