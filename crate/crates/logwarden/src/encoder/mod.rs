//! Content encoding: tokenization, hashed character-n-gram word vectors,
//! TF-IDF weighting, per-log content embeddings, and the per-field scalar
//! projection consumed by the spectral feature path.
//!
//! Word vectors are subword-hashed rather than trained: every 3-, 4-, and
//! 5-character-gram of `<token>` (with boundary markers) is hashed into one
//! of `e` buckets with a signed unit contribution, and the bucket sums are
//! divided by the n-gram count. Tokens sharing subwords therefore land near
//! each other, unseen tokens need no vocabulary, and the whole encoding is
//! a pure function of (token, dimension, seed).

pub mod sgns;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{LogRecord, FIELD_COUNT};
use crate::seeds::{derive_seed, fnv1a64};

/// One token per canonical field, in fixed order: event id, process name,
/// base file name, logon type, parent process name. The empty string is the
/// missing-field sentinel.
pub type TokenVector = [String; FIELD_COUNT];

/// Field order: `[event_id, process_name, base_file_name, logon_type,
/// parent_process_name]`. Records are already lowercased/path-stripped at
/// ingest, so this is a projection, not a normalization.
pub fn tokenize(rec: &LogRecord) -> TokenVector {
    [
        rec.event_id.to_string(),
        rec.process_name.clone(),
        rec.base_file_name.clone(),
        rec.logon_type.clone(),
        rec.parent_process_name.clone(),
    ]
}

/// Order-sensitive 64-bit signature of a log's token content. Two records
/// with identical canonical fields collide by construction; used as the
/// transfer key for network embeddings across corpora.
pub fn content_signature(tv: &TokenVector) -> u64 {
    let mut buf = Vec::with_capacity(64);
    for t in tv {
        buf.extend_from_slice(t.as_bytes());
        buf.push(0x1f);
    }
    fnv1a64(0x7369_676e, &buf)
}

/// Deterministic hashed-subword word vector; the sentinel (empty) token maps
/// to the zero vector. Pure in (token, e, seed).
pub fn word_vec(token: &str, e: usize, seed: u64) -> Vec<f64> {
    let mut values = vec![0.0f64; e];
    if token.is_empty() || e == 0 {
        return values;
    }
    let marked = format!("<{token}>");
    // Byte offsets of character boundaries so n-grams slice without allocating.
    let mut bounds: Vec<usize> = marked.char_indices().map(|(i, _)| i).collect();
    bounds.push(marked.len());
    let chars = bounds.len() - 1;
    let mut count = 0u64;
    for n in 3..=5usize {
        if chars < n {
            break;
        }
        for i in 0..=(chars - n) {
            let gram = &marked[bounds[i]..bounds[i + n]];
            let h = fnv1a64(seed, gram.as_bytes());
            let bucket = (h % e as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
            count += 1;
        }
    }
    let inv = 1.0 / count as f64;
    for v in &mut values {
        *v *= inv;
    }
    values
}

/// Document-frequency statistics over a training window; one log entry is
/// one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub doc_count: u64,
    pub doc_freq: BTreeMap<String, u64>,
}

impl TfIdfModel {
    pub fn fit(corpus: &[TokenVector]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::validation("tfidf.corpus", "cannot fit on an empty corpus"));
        }
        let mut doc_freq: BTreeMap<String, u64> = BTreeMap::new();
        for tv in corpus {
            let mut seen: [Option<&str>; FIELD_COUNT] = [None; FIELD_COUNT];
            for t in tv {
                if !seen.iter().flatten().any(|s| *s == t.as_str()) {
                    if let Some(slot) = seen.iter_mut().find(|s| s.is_none()) {
                        *slot = Some(t);
                    }
                    *doc_freq.entry(t.clone()).or_insert(0) += 1;
                }
            }
        }
        Ok(TfIdfModel { doc_count: corpus.len() as u64, doc_freq })
    }

    /// Smoothed inverse document frequency, `ln((1+N)/(1+df)) + 1`; unseen
    /// tokens take df = 0 (maximum idf), never a domain error.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.doc_freq.get(token).copied().unwrap_or(0) as f64;
        ((1.0 + self.doc_count as f64) / (1.0 + df)).ln() + 1.0
    }

    /// Per-field weights for one log: `w_i = tf_i · idf(t_i)` where tf is
    /// the token's count within this vector divided by the field count.
    pub fn weights(&self, tv: &TokenVector) -> [f64; FIELD_COUNT] {
        let mut w = [0.0f64; FIELD_COUNT];
        for i in 0..FIELD_COUNT {
            let count = tv.iter().filter(|t| **t == tv[i]).count();
            let tf = count as f64 / FIELD_COUNT as f64;
            w[i] = tf * self.idf(&tv[i]);
        }
        w
    }
}

/// Weighted-mean content embedding with explicit weights: `(1/n) Σ w_i·u_i`.
/// Exposed so weight-scaling behavior is testable in isolation.
pub fn embed_with_weights(
    tv: &TokenVector,
    weights: &[f64; FIELD_COUNT],
    e: usize,
    seed: u64,
) -> Vec<f64> {
    let mut out = vec![0.0f64; e];
    for (t, w) in tv.iter().zip(weights) {
        let u = word_vec(t, e, seed);
        for (o, uj) in out.iter_mut().zip(&u) {
            *o += w * uj;
        }
    }
    let inv = 1.0 / FIELD_COUNT as f64;
    for o in &mut out {
        *o *= inv;
    }
    out
}

/// Fixed seeded unit-norm projection vector used to collapse each field's
/// word vector to one scalar for the spectral path.
pub fn projection_vector(e: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "field-projection"));
    let mut r: Vec<f64> = (0..e).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut r {
            *x /= norm;
        }
    }
    r
}

/// Frozen content encoder: TF-IDF statistics plus the hashing seed and the
/// field projection. Pure and shareable across threads after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentEncoder {
    pub dim: usize,
    pub seed: u64,
    pub tfidf: TfIdfModel,
    projection: Vec<f64>,
}

impl ContentEncoder {
    pub fn new(dim: usize, seed: u64, tfidf: TfIdfModel) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("encoder.dim", "embedding dimension must be at least 1"));
        }
        let projection = projection_vector(dim, seed);
        Ok(ContentEncoder { dim, seed, tfidf, projection })
    }

    /// TF-IDF-weighted mean of the five token word vectors.
    pub fn content_embed(&self, tv: &TokenVector) -> Vec<f64> {
        let w = self.tfidf.weights(tv);
        embed_with_weights(tv, &w, self.dim, self.seed)
    }

    /// Per-field scalars `w_i · ⟨u_i, r⟩`: the length-5 row the spectral
    /// path stacks into its sample matrix.
    pub fn field_scalars(&self, tv: &TokenVector) -> [f64; FIELD_COUNT] {
        let w = self.tfidf.weights(tv);
        let mut out = [0.0f64; FIELD_COUNT];
        for i in 0..FIELD_COUNT {
            if tv[i].is_empty() {
                continue;
            }
            let u = word_vec(&tv[i], self.dim, self.seed);
            let dot: f64 = u.iter().zip(&self.projection).map(|(a, b)| a * b).sum();
            out[i] = w[i] * dot;
        }
        out
    }
}
