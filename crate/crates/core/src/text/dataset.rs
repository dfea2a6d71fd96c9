use std::path::Path;

use super::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonClickbait = 0,
    Clickbait = 1,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::NonClickbait),
            1 => Some(Label::Clickbait),
            _ => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn is_positive(self) -> bool {
        self == Label::Clickbait
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadlineExample {
    pub raw_text: String,
    pub tokens: Vec<String>,
    pub label: Label,
}

impl HeadlineExample {
    pub fn new(text: &str, label: Label) -> Self {
        Self {
            raw_text: text.to_string(),
            tokens: tokenize(text),
            label,
        }
    }
}

/// Reads `<label>\t<headline>` lines. Blank lines and lines starting with `#`
/// are skipped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<HeadlineExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

pub fn parse_dataset(text: &str, origin: &Path) -> Result<Vec<HeadlineExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, headline) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "expected `<label>\\t<headline>`"))?;
        let label = label
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(Label::from_bit)
            .ok_or_else(|| {
                Error::parse(origin, lineno, format!("label must be 0 or 1, got {:?}", label.trim()))
            })?;
        let example = HeadlineExample::new(headline.trim(), label);
        if example.tokens.is_empty() {
            return Err(Error::parse(
                origin,
                lineno,
                format!("headline {headline:?} has no tokens"),
            ));
        }
        out.push(example);
    }
    Ok(out)
}
