//! Recurrent neighborhood aggregation: a two-layer bidirectional LSTM with
//! fixed seeded weights (reservoir-style, never trained) followed by a mean
//! over positions and a fixed unit-norm linear projection.
//!
//! Inference-only use is deliberate: anomaly scoring happens downstream in
//! the clustering model, and this aggregator only has to be a stable,
//! deterministic, well-conditioned sequence summary. Stability comes from
//! bounding each recurrent gate block's operator norm at 0.9, so state
//! iteration cannot blow up regardless of sequence length.
//!
//! Internals run in f32 with batched row-major matrix kernels: sequences
//! are processed time-major so each step is one `[B×D]·[D×4h]` multiply
//! plus one `[B×h]·[h×4h]` multiply shared across the whole batch. The
//! batch path and the single-sequence path accumulate in identical order,
//! so their outputs are bit-equal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    /// Per-position input width (network ⊕ content embedding, so 2e).
    pub input_dim: usize,
    /// Stacked hidden sizes for the two bidirectional layers.
    pub hidden: (usize, usize),
    /// Final embedding dimension e.
    pub output_dim: usize,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig { input_dim: 200, hidden: (64, 32), output_dim: 100, seed: 42 }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::validation("gnn.input_dim", "must be at least 1"));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(Error::validation("gnn.hidden", "layer sizes must be at least 1"));
        }
        if self.output_dim == 0 {
            return Err(Error::validation("gnn.output_dim", "must be at least 1"));
        }
        Ok(())
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major. The i-k-j order keeps the
/// inner loop unit-stride (auto-vectorizes) while accumulation over k stays
/// ascending for every output element, which is what makes batch and
/// single-sequence runs bit-identical.
fn gemm_acc(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// One direction of one LSTM layer. Weight layout is transposed for the
/// row-major kernels: `wx_t[d][gate·h + j]`, gates ordered i, f, g, o.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LstmDirection {
    pub(crate) input_dim: usize,
    pub(crate) hidden: usize,
    /// `[input_dim × 4·hidden]`.
    pub(crate) wx_t: Vec<f32>,
    /// `[hidden × 4·hidden]`, each h×h gate block norm-bounded at 0.9.
    pub(crate) wh_t: Vec<f32>,
    /// `[4·hidden]`, zero by construction (keeps the pass centered).
    pub(crate) bias: Vec<f32>,
}

/// Largest singular value via power iteration on GᵀG, in f64. An operator-
/// norm bound is also a spectral-radius bound, which is the stability
/// property the recurrence needs.
fn operator_norm(block: &[f64], h: usize) -> f64 {
    let mut v = vec![1.0f64 / (h as f64).sqrt(); h];
    let mut sigma = 0.0;
    for _ in 0..100 {
        // w = G v; u = Gᵀ w
        let mut w = vec![0.0f64; h];
        for i in 0..h {
            for j in 0..h {
                w[i] += block[i * h + j] * v[j];
            }
        }
        let mut u = vec![0.0f64; h];
        for i in 0..h {
            for j in 0..h {
                u[j] += block[i * h + j] * w[i];
            }
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vj, uj) in v.iter_mut().zip(&u) {
            *vj = uj / norm;
        }
        sigma = norm.sqrt();
    }
    sigma
}

impl LstmDirection {
    fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gates = 4 * hidden;
        let ax = 1.0 / (input_dim as f32).sqrt();
        let wx_t: Vec<f32> = (0..input_dim * gates).map(|_| rng.gen_range(-ax..ax)).collect();
        let ah = 1.0 / (hidden as f32).sqrt();
        let mut wh_t: Vec<f32> = (0..hidden * gates).map(|_| rng.gen_range(-ah..ah)).collect();

        // Rescale each recurrent gate block to operator norm 0.9.
        for gate in 0..4 {
            let mut block = vec![0.0f64; hidden * hidden];
            for r in 0..hidden {
                for c in 0..hidden {
                    block[r * hidden + c] = wh_t[c * gates + gate * hidden + r] as f64;
                }
            }
            let sigma = operator_norm(&block, hidden);
            if sigma > 0.0 {
                let scale = (0.9 / sigma) as f32;
                for c in 0..hidden {
                    for j in 0..hidden {
                        wh_t[c * gates + gate * hidden + j] *= scale;
                    }
                }
            }
        }

        LstmDirection { input_dim, hidden, wx_t, wh_t, bias: vec![0.0; gates] }
    }

    /// Runs the direction over a time-major batch. `x` is `[T][B×D]`
    /// concatenated; outputs land position-aligned in `out` as `[T][B×h]`.
    /// `reverse` consumes positions T-1..0, so `out[t]` holds the state
    /// after reading the suffix starting at t.
    pub(crate) fn run(&self, x: &[f32], t_len: usize, batch: usize, reverse: bool, out: &mut [f32]) {
        let d = self.input_dim;
        let h = self.hidden;
        let gates = 4 * h;
        debug_assert_eq!(x.len(), t_len * batch * d);
        debug_assert_eq!(out.len(), t_len * batch * h);
        let mut hs = vec![0.0f32; batch * h];
        let mut cs = vec![0.0f32; batch * h];
        let mut g = vec![0.0f32; batch * gates];
        let order: Vec<usize> =
            if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
        for t in order {
            for gv in g.chunks_mut(gates) {
                gv.copy_from_slice(&self.bias);
            }
            gemm_acc(&x[t * batch * d..(t + 1) * batch * d], &self.wx_t, &mut g, batch, d, gates);
            gemm_acc(&hs, &self.wh_t, &mut g, batch, h, gates);
            for b in 0..batch {
                let gv = &g[b * gates..(b + 1) * gates];
                let hrow = &mut hs[b * h..(b + 1) * h];
                let crow = &mut cs[b * h..(b + 1) * h];
                for j in 0..h {
                    let i_g = sigmoid(gv[j]);
                    let f_g = sigmoid(gv[h + j]);
                    let g_g = gv[2 * h + j].tanh();
                    let o_g = sigmoid(gv[3 * h + j]);
                    crow[j] = f_g * crow[j] + i_g * g_g;
                    hrow[j] = o_g * crow[j].tanh();
                }
            }
            out[t * batch * h..(t + 1) * batch * h].copy_from_slice(&hs);
        }
    }
}

/// Frozen weights for the full stack: two bidirectional layers plus the
/// output projection (conceptual rows unit-norm).
#[derive(Debug, Clone, PartialEq)]
pub struct BiRnnWeights {
    cfg: GnnConfig,
    l1f: LstmDirection,
    l1b: LstmDirection,
    l2f: LstmDirection,
    l2b: LstmDirection,
    /// `[2·h2 × output_dim]`, transposed so columns are the unit-norm rows.
    pub(crate) projection_t: Vec<f32>,
}

impl BiRnnWeights {
    pub fn new(cfg: &GnnConfig) -> Result<Self> {
        cfg.validate()?;
        let (h1, h2) = cfg.hidden;
        let l1f = LstmDirection::new(cfg.input_dim, h1, derive_seed(cfg.seed, "gnn.l1.fwd"));
        let l1b = LstmDirection::new(cfg.input_dim, h1, derive_seed(cfg.seed, "gnn.l1.bwd"));
        let l2f = LstmDirection::new(2 * h1, h2, derive_seed(cfg.seed, "gnn.l2.fwd"));
        let l2b = LstmDirection::new(2 * h1, h2, derive_seed(cfg.seed, "gnn.l2.bwd"));

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "gnn.projection"));
        let rows = 2 * h2;
        let mut projection_t: Vec<f32> =
            (0..rows * cfg.output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for o in 0..cfg.output_dim {
            let norm: f32 = (0..rows)
                .map(|k| projection_t[k * cfg.output_dim + o].powi(2))
                .sum::<f32>()
                .sqrt();
            if norm > 0.0 {
                for k in 0..rows {
                    projection_t[k * cfg.output_dim + o] /= norm;
                }
            }
        }
        Ok(BiRnnWeights { cfg: *cfg, l1f, l1b, l2f, l2b, projection_t })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.cfg
    }

    /// Aggregates one sequence (`positions × input_dim`, position-major).
    pub fn aggregate(&self, seq: &[f32], positions: usize) -> Result<Vec<f64>> {
        Ok(self.aggregate_batch(&[seq], positions)?.pop().expect("one output per sequence"))
    }

    /// Aggregates a batch of equal-length sequences in one pass. Bit-equal
    /// to calling [`Self::aggregate`] per sequence.
    pub fn aggregate_batch(&self, seqs: &[&[f32]], positions: usize) -> Result<Vec<Vec<f64>>> {
        if positions == 0 {
            return Err(Error::validation("gnn.positions", "sequence must be non-empty"));
        }
        if seqs.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.cfg.input_dim;
        let expected = positions * d;
        for s in seqs {
            if s.len() != expected {
                return Err(Error::DimensionMismatch { expected, got: s.len() });
            }
        }
        let b = seqs.len();
        let (h1, h2) = self.cfg.hidden;

        // Time-major input: x1[t][row][d].
        let mut x1 = vec![0.0f32; positions * b * d];
        for (row, s) in seqs.iter().enumerate() {
            for t in 0..positions {
                x1[(t * b + row) * d..(t * b + row + 1) * d]
                    .copy_from_slice(&s[t * d..(t + 1) * d]);
            }
        }

        let mut o1f = vec![0.0f32; positions * b * h1];
        let mut o1b = vec![0.0f32; positions * b * h1];
        self.l1f.run(&x1, positions, b, false, &mut o1f);
        self.l1b.run(&x1, positions, b, true, &mut o1b);

        // Layer-2 input: forward ⊕ backward per position.
        let d2 = 2 * h1;
        let mut x2 = vec![0.0f32; positions * b * d2];
        for t in 0..positions {
            for row in 0..b {
                let dst = (t * b + row) * d2;
                let src = (t * b + row) * h1;
                x2[dst..dst + h1].copy_from_slice(&o1f[src..src + h1]);
                x2[dst + h1..dst + d2].copy_from_slice(&o1b[src..src + h1]);
            }
        }

        let mut o2f = vec![0.0f32; positions * b * h2];
        let mut o2b = vec![0.0f32; positions * b * h2];
        self.l2f.run(&x2, positions, b, false, &mut o2f);
        self.l2b.run(&x2, positions, b, true, &mut o2b);

        // Mean over positions of forward ⊕ backward, then project.
        let agg_dim = 2 * h2;
        let mut agg = vec![0.0f32; b * agg_dim];
        for t in 0..positions {
            for row in 0..b {
                let dst = row * agg_dim;
                let src = (t * b + row) * h2;
                for j in 0..h2 {
                    agg[dst + j] += o2f[src + j];
                    agg[dst + h2 + j] += o2b[src + j];
                }
            }
        }
        let inv = 1.0 / positions as f32;
        for v in &mut agg {
            *v *= inv;
        }

        let mut out = vec![0.0f32; b * self.cfg.output_dim];
        gemm_acc(&agg, &self.projection_t, &mut out, b, agg_dim, self.cfg.output_dim);
        Ok(out
            .chunks(self.cfg.output_dim)
            .map(|row| row.iter().map(|v| *v as f64).collect())
            .collect())
    }
}
