//! Dataset ingestion and mini-batch encoding.

mod batch;
mod dataset;
mod vectors;
mod vocab;

pub use batch::{encode_batch, EncodedBatch, EncodeLimits};
pub use dataset::{load_dataset, parse_dataset, HeadlineExample, Label};
pub use vectors::{load_pretrained_embeddings, parse_embeddings, EmbeddingTable};
pub use vocab::{build_vocab, Vocabulary, PAD, UNK};

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
