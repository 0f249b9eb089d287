//! Skip-gram network embedding with negative sampling, trained over walk
//! windows treated as sentences.
//!
//! Each neighbor window becomes the sentence `[target, s_1, …, s_K]`. For a
//! center position, a dynamic radius is drawn in `1..=window`; every
//! in-range context word's input vector is trained against the center word
//! plus `negatives` draws from the unigram^0.75 table (the classic
//! formulation). Training is single-threaded with a fixed draw order, so
//! results are bit-reproducible for a given seed.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provgraph::NodeId;
use crate::sampler::NeighborSample;
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgnsConfig {
    /// Embedding dimension e.
    pub dim: usize,
    /// Maximum context radius; the per-position radius is uniform in 1..=window.
    pub window: usize,
    /// Negative samples per positive pair.
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig { dim: 100, window: 5, negatives: 5, learning_rate: 0.025, epochs: 5, seed: 42 }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("sgns.dim", "must be at least 1"));
        }
        if self.window == 0 {
            return Err(Error::validation("sgns.window", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("sgns.learning_rate", "must be positive and finite"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("sgns.epochs", "must be at least 1"));
        }
        Ok(())
    }
}

/// Unigram^0.75 sampling table: index `t` holds the word whose cumulative
/// probability band covers `t / size`.
fn build_neg_table(counts: &[u64], size: usize) -> Vec<u32> {
    let total: f64 = counts.iter().map(|&c| (c as f64).powf(0.75)).sum();
    let mut table = vec![0u32; size];
    let mut word = 0usize;
    let mut cum = (counts[0] as f64).powf(0.75) / total;
    for (t, slot) in table.iter_mut().enumerate() {
        *slot = word as u32;
        if (t + 1) as f64 / size as f64 > cum && word + 1 < counts.len() {
            word += 1;
            cum += (counts[word] as f64).powf(0.75) / total;
        }
    }
    table
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    let x = x.clamp(-8.0, 8.0);
    1.0 / (1.0 + (-x).exp())
}

/// Trains the embedding table; every node appearing in the corpus (as a
/// target or a sample) receives a vector.
pub fn network_embed(
    corpus: &[NeighborSample],
    cfg: &SgnsConfig,
) -> Result<HashMap<NodeId, Vec<f32>>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::validation("sgns.corpus", "cannot train on an empty walk corpus"));
    }

    // Vocabulary in first-seen order keeps everything order-deterministic.
    let mut index: HashMap<NodeId, u32> = HashMap::new();
    let mut vocab: Vec<NodeId> = Vec::new();
    let mut sentences: Vec<Vec<u32>> = Vec::with_capacity(corpus.len());
    for window in corpus {
        let mut sent = Vec::with_capacity(window.samples.len() + 1);
        for v in std::iter::once(&window.target).chain(&window.samples) {
            let id = *index.entry(*v).or_insert_with(|| {
                vocab.push(*v);
                (vocab.len() - 1) as u32
            });
            sent.push(id);
        }
        sentences.push(sent);
    }
    let n_vocab = vocab.len();
    let mut counts = vec![0u64; n_vocab];
    for sent in &sentences {
        for &w in sent {
            counts[w as usize] += 1;
        }
    }
    let table = build_neg_table(&counts, 1 << 16);

    let dim = cfg.dim;
    let lr = cfg.learning_rate as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "sgns"));
    let mut syn0: Vec<f32> =
        (0..n_vocab * dim).map(|_| (rng.gen::<f32>() - 0.5) / dim as f32).collect();
    let mut syn1 = vec![0.0f32; n_vocab * dim];
    let mut neu1e = vec![0.0f32; dim];

    for _ in 0..cfg.epochs {
        for sent in &sentences {
            for pos in 0..sent.len() {
                let center = sent[pos] as usize;
                let radius = rng.gen_range(1..=cfg.window);
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(sent.len() - 1);
                for cpos in lo..=hi {
                    if cpos == pos {
                        continue;
                    }
                    let l1 = sent[cpos] as usize * dim;
                    neu1e.iter_mut().for_each(|x| *x = 0.0);
                    for d in 0..=cfg.negatives {
                        let (target, label) = if d == 0 {
                            (center, 1.0f32)
                        } else {
                            let t = table[rng.gen_range(0..table.len())] as usize;
                            if t == center {
                                continue;
                            }
                            (t, 0.0f32)
                        };
                        let l2 = target * dim;
                        let mut f = 0.0f32;
                        for j in 0..dim {
                            f += syn0[l1 + j] * syn1[l2 + j];
                        }
                        let g = (label - sigmoid(f)) * lr;
                        for j in 0..dim {
                            neu1e[j] += g * syn1[l2 + j];
                        }
                        for j in 0..dim {
                            syn1[l2 + j] += g * syn0[l1 + j];
                        }
                    }
                    for j in 0..dim {
                        syn0[l1 + j] += neu1e[j];
                    }
                }
            }
        }
    }

    Ok(vocab
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, syn0[i * dim..(i + 1) * dim].to_vec()))
        .collect())
}
