//! Frequency-domain node features: per-column DFT of the sampled-neighbor
//! window, squared modulus, logarithmic scaling, and half-spectrum
//! truncation.
//!
//! For a window of 𝒩 sampled rows and L feature columns, each column's
//! spectrum is `F_k = Σ_n x_n e^{-2πi·n·k/𝒩}` (forward, unnormalized), the
//! retained value per bin is `ln(a² + b² + 1) / C`, and only the first
//! `L_f = ⌊𝒩/2⌋ + 1` bins survive — real input spectra are conjugate
//! symmetric, so the back half is redundant. The flattened feature vector
//! is L contiguous blocks of L_f entries, column 0 first.
//!
//! The fast transform is an optimization detail; the normative definition
//! is the quadratic sum above, and the two are held to 1e-9 agreement in
//! tests.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::encoder::{tokenize, ContentEncoder};
use crate::error::{Error, Result};
use crate::provgraph::{NodeId, ProvGraph};
use crate::sampler::{sample, RwrConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdaConfig {
    /// Window length 𝒩; must equal the sampler's walk length.
    pub window: usize,
    /// Positive scaling constant C dividing the log-modulus.
    pub log_constant: f64,
}

impl Default for FdaConfig {
    fn default() -> Self {
        FdaConfig { window: 40, log_constant: 1.0 }
    }
}

impl FdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::validation("fda.window", "window must be at least 2"));
        }
        if !(self.log_constant > 0.0 && self.log_constant.is_finite()) {
            return Err(Error::validation("fda.log_constant", "must be positive and finite"));
        }
        Ok(())
    }

    /// Retained bins per column: ⌊𝒩/2⌋ + 1.
    pub fn spectrum_len(&self) -> usize {
        self.window / 2 + 1
    }

    /// Flattened feature length for `cols` feature columns.
    pub fn feature_len(&self, cols: usize) -> usize {
        self.spectrum_len() * cols
    }
}

/// Row-major 𝒩×L window of per-log feature scalars, in walk order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        SampleMatrix { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("sample_matrix", "ragged rows"));
        }
        let n = rows.len();
        Ok(SampleMatrix { rows: n, cols, values: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }
}

/// Exact forward DFT of one real column. Convenience entry point; the
/// batch path below reuses plans and buffers instead.
pub fn dft_column(x: &[f64]) -> Result<Vec<Complex64>> {
    if x.len() < 2 {
        return Err(Error::validation("fda.window", "window must be at least 2"));
    }
    if let Some(_bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { column: 0 });
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
    Ok(buf)
}

/// Reusable extractor: owns the transform plan and scratch buffers so the
/// per-node hot path allocates nothing after warmup.
pub struct FdaExtractor {
    cfg: FdaConfig,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FdaExtractor {
    pub fn new(cfg: FdaConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.window);
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Ok(FdaExtractor { cfg, fft, buf: vec![Complex64::new(0.0, 0.0); cfg.window], scratch })
    }

    pub fn config(&self) -> &FdaConfig {
        &self.cfg
    }

    pub fn to_feature(&mut self, m: &SampleMatrix) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.cfg.feature_len(m.cols()));
        self.to_feature_into(m, &mut out)?;
        Ok(out)
    }

    /// Appends the flattened feature (L blocks of L_f) onto `out`.
    pub fn to_feature_into(&mut self, m: &SampleMatrix, out: &mut Vec<f64>) -> Result<()> {
        if m.rows() != self.cfg.window {
            return Err(Error::DimensionMismatch { expected: self.cfg.window, got: m.rows() });
        }
        let keep = self.cfg.spectrum_len();
        let inv_c = 1.0 / self.cfg.log_constant;
        for c in 0..m.cols() {
            for r in 0..m.rows() {
                let v = m.get(r, c);
                if !v.is_finite() {
                    return Err(Error::NonFinite { column: c });
                }
                self.buf[r] = Complex64::new(v, 0.0);
            }
            self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
            for bin in &self.buf[..keep] {
                let r = bin.re * bin.re + bin.im * bin.im;
                out.push((r + 1.0).ln() * inv_c);
            }
        }
        Ok(())
    }
}

/// Reference composition of the spectral path for one node: sample the
/// neighborhood, stack per-log field scalars in walk order, transform.
/// The batch pipeline reproduces this exactly with memoized scalars.
pub fn embed_node_fda(
    graph: &ProvGraph,
    v: NodeId,
    rwr_cfg: &RwrConfig,
    encoder: &ContentEncoder,
    extractor: &mut FdaExtractor,
) -> Result<Vec<f64>> {
    let s = sample(graph, v, rwr_cfg)?;
    let mut m = SampleMatrix::new(s.samples.len(), crate::ingest::FIELD_COUNT);
    for (r, id) in s.samples.iter().enumerate() {
        let scal = encoder.field_scalars(&tokenize(graph.record(*id)?));
        for (c, val) in scal.iter().enumerate() {
            m.set(r, c, *val);
        }
    }
    extractor.to_feature(&m)
}
