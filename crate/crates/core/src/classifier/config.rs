use std::fmt;

use crate::embeddings::CharCnnConfig;
use crate::error::{Error, Result};
use crate::recurrent::{CellKind, Peephole};
use crate::text::EncodeLimits;

/// Which embedding channels feed the recurrent layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Features {
    /// Character-CNN word encodings only.
    Ce,
    /// Pretrained word vectors only.
    We,
    /// Both, word vector first.
    CeWe,
}

impl Features {
    pub const ALL: [Features; 3] = [Features::Ce, Features::We, Features::CeWe];

    pub fn as_str(self) -> &'static str {
        match self {
            Features::Ce => "ce",
            Features::We => "we",
            Features::CeWe => "ce+we",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Some(Features::Ce),
            "we" => Some(Features::We),
            "ce+we" | "we+ce" => Some(Features::CeWe),
            _ => None,
        }
    }

    pub fn uses_chars(self) -> bool {
        matches!(self, Features::Ce | Features::CeWe)
    }

    pub fn uses_words(self) -> bool {
        matches!(self, Features::We | Features::CeWe)
    }
}

impl fmt::Display for Features {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

/// Everything that determines a model's shape and its training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub arch: CellKind,
    pub features: Features,
    pub hidden: usize,
    pub char_dim: usize,
    pub char_channels: usize,
    pub kernel: usize,
    pub char_layers: usize,
    pub peephole: Peephole,
    pub dropout: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
    pub grad_clip: f64,
    pub fine_tune_words: bool,
    pub early_stopping: bool,
    pub patience: usize,
    pub min_count: usize,
    pub max_words: usize,
    pub max_chars: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: CellKind::Lstm,
            features: Features::CeWe,
            hidden: 128,
            char_dim: 16,
            char_channels: 32,
            kernel: 3,
            char_layers: 3,
            peephole: Peephole::Full,
            dropout: 0.3,
            batch_size: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 10,
            seed: 0,
            grad_clip: 5.0,
            fine_tune_words: false,
            early_stopping: false,
            patience: 2,
            min_count: 1,
            max_words: 30,
            max_chars: 24,
        }
    }
}

/// Keys understood by [`ModelConfig::set`], in serialization order.
pub const MODEL_KEYS: &[&str] = &[
    "arch",
    "features",
    "hidden",
    "char_dim",
    "char_channels",
    "kernel",
    "char_layers",
    "peephole",
    "dropout",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "epochs",
    "seed",
    "grad_clip",
    "fine_tune_words",
    "early_stopping",
    "patience",
    "min_count",
    "max_words",
    "max_chars",
];

fn positive(key: &str, value: &str) -> std::result::Result<usize, String> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("{key} must be a positive integer, got {value:?}")),
    }
}

fn real(key: &str, value: &str) -> std::result::Result<f64, String> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{key} must be a finite number, got {value:?}"))
}

fn in_range(key: &str, v: f64, lo: f64, hi: f64, hi_open: bool) -> std::result::Result<f64, String> {
    let ok = v >= lo && if hi_open { v < hi } else { v <= hi };
    if ok {
        Ok(v)
    } else {
        let close = if hi_open { ")" } else { "]" };
        Err(format!("{key} = {v} outside [{lo}, {hi}{close}"))
    }
}

fn flag(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key} must be true or false, got {value:?}")),
    }
}

impl ModelConfig {
    pub fn char_cnn(&self) -> CharCnnConfig {
        CharCnnConfig {
            char_dim: self.char_dim,
            channels: self.char_channels,
            kernel: self.kernel,
            layers: self.char_layers,
        }
    }

    pub fn limits(&self) -> EncodeLimits {
        EncodeLimits {
            max_words: self.max_words,
            max_chars: self.max_chars,
        }
    }

    /// Sets one option from its text form. `Ok(false)` means the key is unknown.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        let value = value.trim();
        match key {
            "arch" => {
                self.arch = CellKind::parse(value)
                    .ok_or_else(|| format!("arch must be rnn, gru or lstm, got {value:?}"))?
            }
            "features" => {
                self.features = Features::parse(value)
                    .ok_or_else(|| format!("features must be ce, we or ce+we, got {value:?}"))?
            }
            "peephole" => {
                self.peephole = Peephole::parse(value)
                    .ok_or_else(|| format!("peephole must be full or diagonal, got {value:?}"))?
            }
            "hidden" => self.hidden = positive(key, value)?,
            "char_dim" => self.char_dim = positive(key, value)?,
            "char_channels" => self.char_channels = positive(key, value)?,
            "kernel" => {
                let k = positive(key, value)?;
                if k % 2 == 0 {
                    return Err(format!("kernel must be odd, got {k}"));
                }
                self.kernel = k;
            }
            "char_layers" => self.char_layers = positive(key, value)?,
            "dropout" => self.dropout = in_range(key, real(key, value)?, 0.0, 1.0, true)?,
            "batch_size" => self.batch_size = positive(key, value)?,
            "lr" => {
                let lr = real(key, value)?;
                if lr <= 0.0 {
                    return Err(format!("lr must be positive, got {lr}"));
                }
                self.lr = lr;
            }
            "beta1" => self.beta1 = in_range(key, real(key, value)?, 0.0, 1.0, true)?,
            "beta2" => self.beta2 = in_range(key, real(key, value)?, 0.0, 1.0, true)?,
            "eps" => {
                let eps = real(key, value)?;
                if eps <= 0.0 {
                    return Err(format!("eps must be positive, got {eps}"));
                }
                self.eps = eps;
            }
            "epochs" => self.epochs = positive(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("seed must be an unsigned integer, got {value:?}"))?
            }
            "grad_clip" => {
                let c = real(key, value)?;
                if c <= 0.0 {
                    return Err(format!("grad_clip must be positive, got {c}"));
                }
                self.grad_clip = c;
            }
            "fine_tune_words" => self.fine_tune_words = flag(key, value)?,
            "early_stopping" => self.early_stopping = flag(key, value)?,
            "patience" => self.patience = positive(key, value)?,
            "min_count" => self.min_count = positive(key, value)?,
            "max_words" => self.max_words = positive(key, value)?,
            "max_chars" => self.max_chars = positive(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "arch" => self.arch.as_str().to_string(),
            "features" => self.features.as_str().to_string(),
            "peephole" => self.peephole.as_str().to_string(),
            "hidden" => self.hidden.to_string(),
            "char_dim" => self.char_dim.to_string(),
            "char_channels" => self.char_channels.to_string(),
            "kernel" => self.kernel.to_string(),
            "char_layers" => self.char_layers.to_string(),
            "dropout" => self.dropout.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "eps" => self.eps.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            "fine_tune_words" => self.fine_tune_words.to_string(),
            "early_stopping" => self.early_stopping.to_string(),
            "patience" => self.patience.to_string(),
            "min_count" => self.min_count.to_string(),
            "max_words" => self.max_words.to_string(),
            "max_chars" => self.max_chars.to_string(),
            _ => return None,
        })
    }

    /// `key = value` lines covering every option.
    pub fn to_text(&self) -> String {
        MODEL_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            match cfg.set(k.trim(), v) {
                Ok(true) => {}
                Ok(false) => return Err(Error::Config(format!("line {}: unknown key {:?}", i + 1, k.trim()))),
                Err(msg) => return Err(Error::Config(format!("line {}: {msg}", i + 1))),
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut probe = Self::default();
        for key in MODEL_KEYS {
            let value = self.get(key).expect("listed key");
            probe.set(key, &value).map_err(Error::Config)?;
        }
        Ok(())
    }
}
