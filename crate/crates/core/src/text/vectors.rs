use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::Vocabulary;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Pretrained word vectors restricted to one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: HashMap<String, Vec<f64>>,
    coverage: f64,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: HashMap::new(),
            coverage: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Data(format!(
                "vector for {token:?} has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        self.rows.insert(token.to_string(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.rows.get(token).map(Vec::as_slice)
    }

    /// Fraction of corpus vocabulary words found in the source file.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    /// Dense `[word_count × dim]` lookup matrix in vocabulary id order. Reserved
    /// ids and words missing from the table get the zero vector.
    pub fn to_matrix(&self, vocab: &Vocabulary) -> Tensor {
        let mut data = vec![0.0; vocab.word_count() * self.dim];
        for (offset, word) in vocab.corpus_words().iter().enumerate() {
            if let Some(v) = self.rows.get(word) {
                let id = offset + 2;
                data[id * self.dim..(id + 1) * self.dim].copy_from_slice(v);
            }
        }
        Tensor::new(&[vocab.word_count(), self.dim.max(1)], data)
            .expect("vocabulary always holds the reserved ids")
    }
}

/// Loads a word2vec-style text file (`<count> <dim>` header, then
/// `<token> <v1> ... <v_dim>` lines), keeping only vocabulary words.
pub fn load_pretrained_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(BufReader::new(file), path, vocab)
}

pub fn parse_embeddings(reader: impl BufRead, origin: &Path, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(origin, e))?,
        None => return Err(Error::parse(origin, 1, "empty file, expected `<count> <dim>` header")),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let dim = match fields.as_slice() {
        [count, dim] => {
            count
                .parse::<usize>()
                .map_err(|_| Error::parse(origin, 1, format!("bad vector count {count:?}")))?;
            dim.parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::parse(origin, 1, format!("bad dimension {dim:?}")))?
        }
        _ => return Err(Error::parse(origin, 1, format!("malformed header {header:?}"))),
    };

    let mut table = EmbeddingTable::new(dim);
    let mut values = Vec::with_capacity(dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else {
            continue;
        };
        values.clear();
        for part in parts {
            let v = part.parse::<f64>().map_err(|_| {
                Error::parse(origin, lineno, format!("non-numeric component {part:?}"))
            })?;
            values.push(v);
        }
        if values.len() != dim {
            return Err(Error::parse(
                origin,
                lineno,
                format!("{} components, header says {dim}", values.len()),
            ));
        }
        if vocab.contains_word(token) && !table.rows.contains_key(token) {
            table.rows.insert(token.to_string(), values.clone());
        }
    }
    let total = vocab.corpus_words().len();
    table.coverage = if total == 0 {
        0.0
    } else {
        table.rows.len() as f64 / total as f64
    };
    Ok(table)
}
