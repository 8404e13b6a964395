//! Deterministic effort and coherence scoring for free-text answers.
//!
//! Answers are embedded as hashed character-trigram count vectors (64-bit
//! FNV-1a, one bucket per hash modulo the dimension), compared with cosine
//! similarity, and scored for length and vocabulary. The embedder sits behind
//! [`TextEmbedder`] so a learned sentence encoder can replace it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ingest::{normalize_label, CleanResponse};
use crate::rng::fnv1a64;
use crate::rules::free_texts;
use crate::schema::SurveySchema;

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScoreConfig {
    pub dim: usize,
    /// Word count at which `length_score` saturates.
    pub length_saturation: usize,
    /// Distinct-word count at which `vocab_score` saturates.
    pub vocab_saturation: usize,
}

impl Default for TextScoreConfig {
    fn default() -> Self {
        TextScoreConfig {
            dim: DEFAULT_DIM,
            length_saturation: 20,
            vocab_saturation: 10,
        }
    }
}

/// L2-normalized embedding, or all zeros for text with no trigrams.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding(pub Vec<f64>);

impl TextEmbedding {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub trait TextEmbedder: Send + Sync {
    fn embed(&self, text: &str) -> TextEmbedding;
}

#[derive(Debug, Clone, Copy)]
pub struct HashedTrigramEmbedder {
    pub dim: usize,
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        HashedTrigramEmbedder { dim: DEFAULT_DIM }
    }
}

/// Character trigrams of the canonical text padded with one space on each
/// side. Empty text has none.
pub fn trigrams(text: &str) -> Vec<String> {
    let canon = normalize_label(text);
    if canon.is_empty() {
        return Vec::new();
    }
    let padded: Vec<char> = format!(" {canon} ").chars().collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

impl TextEmbedder for HashedTrigramEmbedder {
    fn embed(&self, text: &str) -> TextEmbedding {
        let mut v = vec![0.0; self.dim];
        if self.dim == 0 {
            return TextEmbedding(v);
        }
        for gram in trigrams(text) {
            let bucket = (fnv1a64(gram.as_bytes()) % self.dim as u64) as usize;
            v[bucket] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        TextEmbedding(v)
    }
}

pub fn embed_text(text: &str) -> TextEmbedding {
    HashedTrigramEmbedder::default().embed(text)
}

/// Cosine similarity of two embeddings; 0 when either is the zero vector.
pub fn cosine(a: &TextEmbedding, b: &TextEmbedding) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Mean pairwise cosine of the non-empty texts mapped to `[0, 1]` by
/// `(c + 1) / 2`. Fewer than two non-empty texts score a neutral 1.0.
pub fn coherence_score_with(embedder: &dyn TextEmbedder, texts: &[&str]) -> f64 {
    let embedded: Vec<TextEmbedding> = texts
        .iter()
        .filter(|t| !normalize_label(t).is_empty())
        .map(|t| embedder.embed(t))
        .collect();
    if embedded.len() < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..embedded.len() {
        for j in i + 1..embedded.len() {
            total += cosine(&embedded[i], &embedded[j]);
            pairs += 1;
        }
    }
    ((total / pairs as f64 + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub fn coherence_score(texts: &[&str]) -> f64 {
    coherence_score_with(&HashedTrigramEmbedder::default(), texts)
}

/// `(length_score, vocab_score)` of one answer.
pub fn length_vocab_score_with(
    text: &str,
    stoplist: &BTreeSet<String>,
    config: &TextScoreConfig,
) -> (f64, f64) {
    let canon = normalize_label(text);
    let words: Vec<&str> = canon.split_whitespace().collect();
    let ratio = |count: usize, saturation: usize| {
        if saturation == 0 {
            1.0
        } else {
            (count as f64 / saturation as f64).min(1.0)
        }
    };
    let length = if words.is_empty() {
        0.0
    } else {
        ratio(words.len(), config.length_saturation)
    };
    let vocab = if canon.is_empty() || stoplist.contains(&canon) {
        0.0
    } else {
        let distinct: BTreeSet<&str> = words.iter().copied().collect();
        ratio(distinct.len(), config.vocab_saturation)
    };
    (length, vocab)
}

pub fn length_vocab_score(text: &str, stoplist: &BTreeSet<String>) -> (f64, f64) {
    length_vocab_score_with(text, stoplist, &TextScoreConfig::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextScoreReport {
    pub respondent_id: String,
    pub coherence: f64,
    pub length_score: f64,
    pub vocab_score: f64,
    pub combined: f64,
}

pub fn combine(coherence: f64, length_score: f64, vocab_score: f64) -> f64 {
    0.5 * coherence + 0.25 * length_score + 0.25 * vocab_score
}

/// Scores every free-text answer of a response. Length and vocabulary are
/// averaged over all free-text questions, blanks included; a schema with no
/// free-text questions scores 0 on both.
pub fn score_response(
    clean: &CleanResponse,
    schema: &SurveySchema,
    stoplist: &BTreeSet<String>,
    config: &TextScoreConfig,
) -> TextScoreReport {
    let texts = free_texts(clean, schema);
    let embedder = HashedTrigramEmbedder { dim: config.dim };
    let coherence = coherence_score_with(&embedder, &texts);
    let (mut length, mut vocab) = (0.0, 0.0);
    for t in &texts {
        let (l, v) = length_vocab_score_with(t, stoplist, config);
        length += l;
        vocab += v;
    }
    if !texts.is_empty() {
        length /= texts.len() as f64;
        vocab /= texts.len() as f64;
    }
    TextScoreReport {
        respondent_id: clean.respondent_id.clone(),
        coherence,
        length_score: length,
        vocab_score: vocab,
        combined: combine(coherence, length, vocab),
    }
}
