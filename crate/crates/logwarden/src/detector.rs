//! Unsupervised detection: single-pass leader clustering with a cosine
//! membership threshold, squared-L2 training loss, and a threshold decision
//! at score > τ·loss_train.
//!
//! Membership and loss deliberately use different geometries — cosine
//! similarity decides which cluster a vector joins (direction), squared
//! Euclidean distance measures how anomalous a vector is (magnitude and
//! direction). An optional unit-normalization mode reconciles the two; it
//! is off by default and recorded in the model so scoring always matches
//! training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine similarity with the zero-vector convention: any comparison
/// involving a zero vector is 0 (forces such vectors into their own
/// clusters instead of dividing by zero).
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn unit_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// Trained clustering model: centroids, their member counts, the thresholds
/// that produced them, and the frozen training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub member_counts: Vec<u64>,
    /// Cosine membership threshold used at training time.
    pub delta: f64,
    /// Anomaly tolerance multiplier: anomalous iff score > tau·loss_train.
    pub tau: f64,
    /// Mean over the training corpus of the minimum squared L2 distance to
    /// the final centroids.
    pub loss_train: f64,
    /// Whether vectors were unit-normalized before training (and must be
    /// before scoring).
    pub normalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionResult {
    /// Minimum squared L2 distance to any centroid.
    pub score: f64,
    /// Index of the nearest centroid.
    pub cluster: Option<usize>,
    pub is_anomaly: bool,
}

fn validate_corpus(vectors: &[Vec<f64>]) -> Result<usize> {
    let dim = match vectors.first() {
        Some(v) => v.len(),
        None => return Err(Error::validation("detector.corpus", "cannot train on an empty corpus")),
    };
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        if let Some(col) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { column: col });
        }
    }
    Ok(dim)
}

/// Mean over the corpus of the minimum squared distance to the centroids —
/// the frozen training loss, recomputed against the FINAL centroids.
fn mean_min_distance(vectors: &[Vec<f64>], centroids: &[Vec<f64>]) -> f64 {
    let sum: f64 = vectors
        .iter()
        .map(|v| {
            centroids
                .iter()
                .map(|c| squared_l2(v, c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / vectors.len() as f64
}

/// Single-pass leader clustering: each vector joins the most-similar
/// centroid when similarity ≥ δ (updating it as a running mean), otherwise
/// seeds a new cluster. Order-sensitive by design; insertion order is
/// corpus order.
pub fn train_statistical(
    vectors: &[Vec<f64>],
    delta: f64,
    tau: f64,
    normalize: bool,
) -> Result<ClusterModel> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::validation("detector.delta", format!("{delta} is outside (0, 1)")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::validation("detector.tau", "must be positive and finite"));
    }
    validate_corpus(vectors)?;
    let work: Vec<Vec<f64>>;
    let vectors = if normalize {
        work = vectors
            .iter()
            .map(|v| {
                let mut v = v.clone();
                unit_normalize(&mut v);
                v
            })
            .collect();
        &work[..]
    } else {
        vectors
    };

    let mut centroids: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for v in vectors {
        let mut best = None;
        let mut best_sim = f64::NEG_INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let sim = cosine_similarity(v, c);
            if sim > best_sim {
                best_sim = sim;
                best = Some(j);
            }
        }
        match best {
            Some(j) if best_sim >= delta => {
                let n = counts[j] as f64;
                for (cj, vj) in centroids[j].iter_mut().zip(v) {
                    *cj = (*cj * n + vj) / (n + 1.0);
                }
                counts[j] += 1;
            }
            _ => {
                centroids.push(v.clone());
                counts.push(1);
            }
        }
    }
    let loss_train = mean_min_distance(vectors, &centroids);
    Ok(ClusterModel {
        centroids,
        member_counts: counts,
        delta,
        tau,
        loss_train,
        normalized: normalize,
    })
}

/// k-means with seeded k-means++ initialization and Lloyd iterations, kept
/// solely for ablation comparisons. `k` is clamped to the corpus size;
/// empty clusters are re-seeded from the farthest point.
pub fn train_kmeans(
    vectors: &[Vec<f64>],
    k: usize,
    iterations: usize,
    delta: f64,
    tau: f64,
    normalize: bool,
    seed: u64,
) -> Result<ClusterModel> {
    use rand::{Rng, SeedableRng};
    if k == 0 {
        return Err(Error::validation("detector.kmeans_k", "must be at least 1"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::validation("detector.tau", "must be positive and finite"));
    }
    validate_corpus(vectors)?;
    let work: Vec<Vec<f64>>;
    let vectors = if normalize {
        work = vectors
            .iter()
            .map(|v| {
                let mut v = v.clone();
                unit_normalize(&mut v);
                v
            })
            .collect();
        &work[..]
    } else {
        vectors
    };
    let n = vectors.len();
    let k = k.min(n);
    let dim = vectors[0].len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding: next centroid drawn proportionally to squared
    // distance from the nearest existing one.
    let mut centroids: Vec<Vec<f64>> = vec![vectors[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| squared_l2(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if t < *w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(vectors[next].clone());
        for (i, v) in vectors.iter().enumerate() {
            d2[i] = d2[i].min(squared_l2(v, centroids.last().expect("just pushed")));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..iterations {
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = squared_l2(v, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0u64; k];
        for (i, v) in vectors.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, x) in sums[assign[i]].iter_mut().zip(v) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed from the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        squared_l2(&vectors[a], &centroids[assign[a]])
                            .total_cmp(&squared_l2(&vectors[b], &centroids[assign[b]]))
                    })
                    .expect("non-empty corpus");
                centroids[j] = vectors[far].clone();
                assign[far] = j;
                changed = true;
            } else {
                for (cj, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *cj = s / counts[j] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut member_counts = vec![0u64; k];
    for a in &assign {
        member_counts[*a] += 1;
    }
    let loss_train = mean_min_distance(vectors, &centroids);
    Ok(ClusterModel { centroids, member_counts, delta, tau, loss_train, normalized: normalize })
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map(Vec::len).unwrap_or(0)
    }

    /// Minimum squared distance to any centroid; anomalous when it exceeds
    /// τ·loss_train.
    pub fn score(&self, v: &[f64]) -> Result<DetectionResult> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        let owned;
        let v = if self.normalized {
            let mut x = v.to_vec();
            unit_normalize(&mut x);
            owned = x;
            &owned[..]
        } else {
            v
        };
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, c) in self.centroids.iter().enumerate() {
            let d = squared_l2(v, c);
            if d < best_d {
                best_d = d;
                best = Some(j);
            }
        }
        Ok(DetectionResult {
            score: best_d,
            cluster: best,
            is_anomaly: best_d > self.tau * self.loss_train,
        })
    }
}

/// Point metrics at a fixed threshold plus threshold-free AUC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Undefined (None) when only one class is present.
    pub auc: Option<f64>,
}

/// Rank-based AUC (Mann–Whitney with midranks for ties) plus point metrics
/// with predictions `score > threshold`. Degenerate ratios (0/0) report 0.
pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    if scores.is_empty() {
        return Err(Error::validation("evaluate.scores", "cannot evaluate an empty set"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (s, l) in scores.iter().zip(labels) {
        match (*s > threshold, *l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let tpr = ratio(tp, tp + fn_);
    let fpr = ratio(fp, fp + tn);
    let precision = ratio(tp, tp + fp);
    let recall = tpr;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = (tp + tn) as f64 / scores.len() as f64;

    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    let auc = if n_pos == 0 || n_neg == 0 {
        None
    } else {
        // Midrank assignment over the sorted scores.
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let mut ranks = vec![0.0f64; scores.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
                j += 1;
            }
            let mid = (i + j) as f64 / 2.0 + 1.0;
            for entry in &idx[i..=j] {
                ranks[*entry] = mid;
            }
            i = j + 1;
        }
        let rank_sum: f64 =
            ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| *r).sum();
        Some(
            (rank_sum - (n_pos as f64) * (n_pos as f64 + 1.0) / 2.0)
                / (n_pos as f64 * n_neg as f64),
        )
    };
    Ok(Metrics { tpr, fpr, precision, recall, f1, accuracy, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vecs(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn identical_vectors_collapse_to_one_cluster() {
        let corpus = vec![vec![1.0, 2.0, 3.0]; 12];
        let m = train_statistical(&corpus, 0.72, 1.0, false).unwrap();
        assert_eq!(m.centroids.len(), 1);
        assert_eq!(m.member_counts, vec![12]);
        assert_eq!(m.loss_train, 0.0);
    }

    #[test]
    fn orthogonal_vectors_split() {
        let corpus = vecs(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let m = train_statistical(&corpus, 0.72, 1.0, false).unwrap();
        assert_eq!(m.centroids.len(), 2);
    }

    /// Three tight direction bundles; cluster count and loss checked against
    /// an independent assignment oracle.
    #[test]
    fn three_direction_mixture_recovers_three_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dirs: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut corpus = Vec::new();
        for i in 0..30 {
            let d = dirs[i % 3];
            let jitter: Vec<f64> =
                d.iter().map(|x| x * rng.gen_range(0.9..1.1) + rng.gen_range(-0.05..0.05)).collect();
            corpus.push(jitter);
        }
        let m = train_statistical(&corpus, 0.72, 1.0, false).unwrap();
        assert_eq!(m.centroids.len(), 3);
        assert_eq!(m.member_counts.iter().sum::<u64>(), 30);
        // Oracle: brute-force Eq-10 recomputation over the final centroids.
        let mut sum = 0.0;
        for v in &corpus {
            let mut best = f64::INFINITY;
            for c in &m.centroids {
                let d: f64 = v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best {
                    best = d;
                }
            }
            sum += best;
        }
        assert!((m.loss_train - sum / 30.0).abs() < 1e-9);
    }

    #[test]
    fn mean_training_score_equals_training_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corpus: Vec<Vec<f64>> =
            (0..100).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let m = train_statistical(&corpus, 0.72, 1.0, false).unwrap();
        let mean: f64 =
            corpus.iter().map(|v| m.score(v).unwrap().score).sum::<f64>() / corpus.len() as f64;
        assert!(
            (mean - m.loss_train).abs() < 1e-9,
            "mean detect score {mean} vs loss_train {}",
            m.loss_train
        );
    }

    #[test]
    fn centroid_scores_zero_and_benign() {
        let corpus = vecs(&[&[1.0, 0.0], &[0.9, 0.1], &[0.0, 1.0]]);
        let m = train_statistical(&corpus, 0.72, 1.0, false).unwrap();
        let r = m.score(&m.centroids[0].clone()).unwrap();
        assert_eq!(r.score, 0.0);
        assert!(!r.is_anomaly);
        assert_eq!(r.cluster, Some(0));
    }

    #[test]
    fn distant_vector_is_anomalous() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let corpus: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![1.0 + rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), 0.0])
            .collect();
        let m = train_statistical(&corpus, 0.72, 1.0, false).unwrap();
        let r = m.score(&[0.0, 0.0, 50.0]).unwrap();
        assert!(r.is_anomaly, "score {} vs gate {}", r.score, m.tau * m.loss_train);
    }

    #[test]
    fn zero_vectors_become_singletons_without_crashing() {
        let corpus = vecs(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]]);
        let m = train_statistical(&corpus, 0.72, 1.0, false).unwrap();
        assert!(m.centroids.len() >= 2);
        assert!(m.score(&[0.0, 0.0]).unwrap().score.is_finite());
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn delta_ladder_is_monotone_on_reference_fixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let corpus: Vec<Vec<f64>> =
            (0..200).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut prev = 0usize;
        for delta in [0.3, 0.5, 0.72, 0.9, 0.99] {
            let m = train_statistical(&corpus, delta, 1.0, false).unwrap();
            assert!(
                m.centroids.len() >= prev,
                "cluster count dropped from {prev} at delta {delta}"
            );
            prev = m.centroids.len();
        }
        assert!(prev > 1);
    }

    #[test]
    fn membership_argmax_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let centroids: Vec<Vec<f64>> =
            (0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        for _ in 0..50 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let argmax = |x: &[f64]| {
                centroids
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| {
                        cosine_similarity(x, a).total_cmp(&cosine_similarity(x, b))
                    })
                    .map(|(i, _)| i)
            };
            for pow in [-3i32, -1, 1, 4, 8] {
                let scaled: Vec<f64> = v.iter().map(|x| x * (2.0f64).powi(pow)).collect();
                assert_eq!(argmax(&v), argmax(&scaled), "pow {pow}");
            }
        }
    }

    #[test]
    fn normalized_mode_is_remembered_by_the_model() {
        let corpus = vecs(&[&[10.0, 0.0], &[0.0, 0.1], &[8.0, 0.2]]);
        let m = train_statistical(&corpus, 0.72, 1.0, true).unwrap();
        assert!(m.normalized);
        // A rescaled training vector scores exactly like the original.
        let a = m.score(&[10.0, 0.0]).unwrap();
        let b = m.score(&[2.5, 0.0]).unwrap();
        assert_eq!(a.score, b.score);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let corpus = vecs(&[&[1.0]]);
        assert!(train_statistical(&corpus, 0.0, 1.0, false).is_err());
        assert!(train_statistical(&corpus, 1.0, 1.0, false).is_err());
        assert!(train_statistical(&corpus, 0.5, 0.0, false).is_err());
        assert!(train_statistical(&[], 0.5, 1.0, false).is_err());
        let ragged = vecs(&[&[1.0, 2.0], &[1.0]]);
        assert!(matches!(
            train_statistical(&ragged, 0.5, 1.0, false),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let m = train_statistical(&vecs(&[&[1.0, 0.0]]), 0.5, 1.0, false).unwrap();
        assert!(m.score(&[1.0]).is_err());
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = [[0.0f64, 0.0], [10.0, 10.0], [-10.0, 10.0]];
        let mut corpus = Vec::new();
        for i in 0..60 {
            let c = centers[i % 3];
            corpus.push(vec![c[0] + rng.gen_range(-0.5..0.5), c[1] + rng.gen_range(-0.5..0.5)]);
        }
        let m = train_kmeans(&corpus, 3, 50, 0.72, 1.0, false, 9).unwrap();
        assert_eq!(m.centroids.len(), 3);
        assert_eq!(m.member_counts.iter().sum::<u64>(), 60);
        assert!(m.member_counts.iter().all(|c| *c == 20), "{:?}", m.member_counts);
        assert!(m.loss_train < 1.0);
        // Determinism under seed.
        let m2 = train_kmeans(&corpus, 3, 50, 0.72, 1.0, false, 9).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn kmeans_clamps_k_to_corpus_size() {
        let corpus = vecs(&[&[1.0], &[2.0]]);
        let m = train_kmeans(&corpus, 10, 10, 0.72, 1.0, false, 1).unwrap();
        assert!(m.centroids.len() <= 2);
        assert!(train_kmeans(&corpus, 0, 10, 0.72, 1.0, false, 1).is_err());
    }

    #[test]
    fn frozen_auc_example() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        let m = evaluate(&scores, &labels, 0.5).unwrap();
        assert!((m.auc.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perfect_separation_gives_unit_auc() {
        let scores = [0.1, 0.2, 0.9, 0.95];
        let labels = [false, false, true, true];
        let m = evaluate(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.auc, Some(1.0));
        assert_eq!(m.tpr, 1.0);
        assert_eq!(m.fpr, 0.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn chance_scores_give_half_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let scores: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<bool> = (0..4000).map(|_| rng.gen::<bool>()).collect();
        let m = evaluate(&scores, &labels, 0.5).unwrap();
        assert!((m.auc.unwrap() - 0.5).abs() < 0.05, "auc {}", m.auc.unwrap());
    }

    #[test]
    fn single_class_auc_is_undefined_but_points_exist() {
        let m = evaluate(&[0.1, 0.9], &[false, false], 0.5).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.fpr, 0.5);
        assert_eq!(m.tpr, 0.0);
    }

    proptest! {
        /// AUC equals the O(N²) pairwise concordance count (ties at half).
        #[test]
        fn auc_matches_concordance_oracle(
            raw in proptest::collection::vec((0u8..8, proptest::bool::ANY), 2..40),
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 4.0).collect();
            let labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
            let n_pos = labels.iter().filter(|l| **l).count();
            prop_assume!(n_pos > 0 && n_pos < labels.len());
            let m = evaluate(&scores, &labels, 0.5).unwrap();
            let mut conc = 0.0;
            let mut total = 0.0;
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if labels[i] && !labels[j] {
                        total += 1.0;
                        if scores[i] > scores[j] {
                            conc += 1.0;
                        } else if scores[i] == scores[j] {
                            conc += 0.5;
                        }
                    }
                }
            }
            prop_assert!((m.auc.unwrap() - conc / total).abs() < 1e-12);
        }

        /// Training then scoring the corpus never yields non-finite scores,
        /// and the Eq-10/Eq-11 consistency holds on arbitrary data.
        #[test]
        fn training_consistency_on_random_corpora(
            corpus in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 3), 1..60),
            delta in 0.05f64..0.95,
        ) {
            let m = train_statistical(&corpus, delta, 1.0, false).unwrap();
            let mean: f64 = corpus.iter()
                .map(|v| m.score(v).unwrap().score)
                .sum::<f64>() / corpus.len() as f64;
            prop_assert!((mean - m.loss_train).abs() < 1e-9);
            prop_assert!(m.member_counts.iter().sum::<u64>() as usize == corpus.len());
        }
    }
}
