//! The marker-token task: label 1 iff the headline contains any marker word.

use baitnet::text::{EmbeddingTable, HeadlineExample, Label};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct MarkerTask {
    pub tokens: Vec<String>,
    pub markers: Vec<String>,
    pub train: Vec<HeadlineExample>,
    pub test: Vec<HeadlineExample>,
    /// Random vectors for every token.
    pub vectors: EmbeddingTable,
}

fn pseudo_word(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(3..=8);
    (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

/// `n` balanced headlines over `vocab_size` distinct pseudo-words, the first
/// `n_markers` of which are markers. Negatives contain no marker; positives
/// contain one or two. The last `test_fraction` of the shuffled set is held out.
pub fn marker_task(n: usize, vocab_size: usize, n_markers: usize, dim: usize, test_fraction: f64, seed: u64) -> MarkerTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = Vec::with_capacity(vocab_size);
    while tokens.len() < vocab_size {
        let w = pseudo_word(&mut rng);
        if !tokens.contains(&w) {
            tokens.push(w);
        }
    }
    let markers = tokens[..n_markers].to_vec();
    let fillers = &tokens[n_markers..];

    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { Label::Clickbait } else { Label::NonClickbait };
        let len = rng.gen_range(4..=12);
        let mut words: Vec<&str> = (0..len).map(|_| fillers.choose(&mut rng).unwrap().as_str()).collect();
        if label.is_positive() {
            let k = rng.gen_range(1..=2);
            for _ in 0..k {
                let at = rng.gen_range(0..len);
                words[at] = markers.choose(&mut rng).unwrap();
            }
        }
        data.push(HeadlineExample::new(&words.join(" "), label));
    }
    data.shuffle(&mut rng);
    let n_test = (n as f64 * test_fraction).round() as usize;
    let test = data.split_off(n - n_test);

    let mut vectors = EmbeddingTable::new(dim);
    for t in &tokens {
        let v = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        vectors.insert(t, v).unwrap();
    }
    MarkerTask {
        tokens,
        markers,
        train: data,
        test,
        vectors,
    }
}
