use std::collections::HashMap;

use super::HeadlineExample;
use crate::error::{Error, Result};

/// Reserved id for padding, in both the word and character maps.
pub const PAD: usize = 0;
/// Reserved id for out-of-vocabulary tokens and characters.
pub const UNK: usize = 1;

const PAD_WORD: &str = "<pad>";
const UNK_WORD: &str = "<unk>";
// Neither is alphanumeric, so the tokenizer can never produce them.
const PAD_CHAR: char = '\0';
const UNK_CHAR: char = '\u{FFFD}';

/// Word and character id maps. Ids are dense in `[0, count)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<char>,
    word_to_id: HashMap<String, usize>,
    char_to_id: HashMap<char, usize>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from corpus entries in id order (reserved ids excluded).
    pub fn from_entries(words: Vec<String>, chars: Vec<char>) -> Result<Self> {
        let mut all_words = vec![PAD_WORD.to_string(), UNK_WORD.to_string()];
        all_words.extend(words);
        let mut all_chars = vec![PAD_CHAR, UNK_CHAR];
        all_chars.extend(chars);
        let word_to_id: HashMap<_, _> = all_words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let char_to_id: HashMap<_, _> =
            all_chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if word_to_id.len() != all_words.len() || char_to_id.len() != all_chars.len() {
            return Err(Error::Data("vocabulary entries are not unique".into()));
        }
        Ok(Self {
            words: all_words,
            chars: all_chars,
            word_to_id,
            char_to_id,
        })
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.word_to_id.get(word).copied().unwrap_or(UNK)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_to_id.get(&c).copied().unwrap_or(UNK)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.word_to_id.contains_key(word) && word != PAD_WORD && word != UNK_WORD
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Corpus words in id order, reserved entries excluded.
    pub fn corpus_words(&self) -> &[String] {
        &self.words[2..]
    }

    /// Corpus characters in id order, reserved entries excluded.
    pub fn corpus_chars(&self) -> &[char] {
        &self.chars[2..]
    }
}

fn rank<K: Ord + Clone + std::hash::Hash>(counts: HashMap<K, usize>, min_count: usize) -> Vec<K> {
    let mut entries: Vec<(K, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_count).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.into_iter().map(|(k, _)| k).collect()
}

/// Assigns word ids to tokens seen at least `min_count` times, most frequent first
/// with lexicographic tie-breaking. Every character seen is kept, in the same order.
pub fn build_vocab(corpus: &[HeadlineExample], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut word_counts: HashMap<String, usize> = HashMap::new();
    let mut char_counts: HashMap<char, usize> = HashMap::new();
    for token in corpus.iter().flat_map(|ex| &ex.tokens) {
        *word_counts.entry(token.clone()).or_default() += 1;
        for c in token.chars() {
            *char_counts.entry(c).or_default() += 1;
        }
    }
    Vocabulary::from_entries(rank(word_counts, min_count.max(1)), rank(char_counts, 1))
}
