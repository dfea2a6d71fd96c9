//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HRNN" | u32 version
//! u64 len | config text (key = value lines)
//! u64 n | n × (u64 len | utf-8 word)          corpus words in id order
//! u64 n | n × u32 scalar value               corpus chars in id order
//! u64 n | n × tensor
//! tensor: u64 len | utf-8 name | u32 ndim | ndim × u64 extent
//!         | u8 requires_grad | numel × f64
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::model::{Classifier, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 4] = b"HRNN";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_checkpoint(model: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Classifier> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(model: &Classifier) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut out, &model.config.to_text());

    let words = model.vocab.corpus_words();
    put_u64(&mut out, words.len());
    for w in words {
        put_str(&mut out, w);
    }
    let chars = model.vocab.corpus_chars();
    put_u64(&mut out, chars.len());
    for &c in chars {
        out.extend_from_slice(&u32::from(c).to_le_bytes());
    }

    let named = model.params.named();
    put_u64(&mut out, named.len());
    for (name, t) in named {
        put_str(&mut out, &name);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            put_u64(&mut out, d);
        }
        out.push(u8::from(t.requires_grad()));
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n) {
            Some(end) if end <= self.bytes.len() => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            _ => Err(Error::Checkpoint(format!(
                "truncated file: {what} needs {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} is out of range")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u64(what)?;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Classifier> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let config = ModelConfig::from_text(&r.string("config")?)?;

    let n_words = r.u64("word count")?;
    let mut words = Vec::new();
    for _ in 0..n_words {
        words.push(r.string("word")?);
    }
    let n_chars = r.u64("char count")?;
    let mut chars = Vec::new();
    for _ in 0..n_chars {
        let v = r.u32("char")?;
        chars.push(char::from_u32(v).ok_or_else(|| Error::Checkpoint(format!("invalid char {v:#x}")))?);
    }
    let vocab = Vocabulary::from_entries(words, chars)?;

    let n_tensors = r.u64("tensor count")?;
    let mut stored = BTreeMap::new();
    for _ in 0..n_tensors {
        let name = r.string("tensor name")?;
        let ndim = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64("extent")?);
        }
        let trainable = r.u8("grad flag")? != 0;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
        // Bounds-checked against the file length before anything is allocated.
        let raw = r.take(numel.saturating_mul(8), &format!("data of {name}"))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&shape, data)
            .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?
            .with_grad(trainable);
        if stored.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    // The skeleton fixes the parameter names and shapes; values come from the file.
    let word_matrix = match (config.features.uses_words(), stored.get("embedding.word_table")) {
        (true, Some(t)) => Some(Tensor::zeros(t.shape())),
        (true, None) => return Err(Error::Checkpoint("missing tensor embedding.word_table".into())),
        (false, _) => None,
    };
    let mut params = ModelParams::init(&config, &vocab, word_matrix, &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut failure = None;
    let mut filled = 0;
    params.visit_mut(&mut |name, slot| {
        if failure.is_some() {
            return;
        }
        match stored.get(&name) {
            Some(t) if t.shape() == slot.shape() => {
                *slot = t.clone();
                filled += 1;
            }
            Some(t) => {
                failure = Some(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, config implies {:?}",
                    t.shape(),
                    slot.shape()
                )))
            }
            None => failure = Some(Error::Checkpoint(format!("missing tensor {name}"))),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if filled != stored.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors in file do not belong to this configuration",
            stored.len() - filled
        )));
    }
    Ok(Classifier { config, vocab, params })
}
