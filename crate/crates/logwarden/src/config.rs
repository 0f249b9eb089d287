//! Runtime configuration shared by the library pipeline and the CLI: one
//! TOML-loadable struct with defaults for every knob, strict validation,
//! and deterministic per-component seed derivation from a single master
//! seed.

use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

use crate::encoder::sgns::SgnsConfig;
use crate::error::{Error, Result};
use crate::fda::FdaConfig;
use crate::gnn::GnnConfig;
use crate::sampler::RwrConfig;
use crate::seeds::derive_seed;

/// Which feature path scores records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    /// Frequency-domain features over the neighborhood sample matrix.
    Fda,
    /// Recurrent aggregation of per-node content and network embeddings.
    Gnn,
}

/// Which clustering rule builds the detection model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClustererKind {
    /// Single-pass leader clustering with a cosine admission threshold.
    Statistical,
    /// Seeded k-means with a fixed cluster count.
    KMeans,
}

/// How a node's neighborhood window is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Random walk with restart.
    Rwr,
    /// Direct neighbors, cyclically padded to the window length.
    Direct,
}

impl std::fmt::Display for PathKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PathKind::Fda => "fda",
            PathKind::Gnn => "gnn",
        })
    }
}

impl std::fmt::Display for ClustererKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClustererKind::Statistical => "statistical",
            ClustererKind::KMeans => "kmeans",
        })
    }
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingMode::Rwr => "rwr",
            SamplingMode::Direct => "direct",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// JSON field (after flattening) that carries the user identity.
    pub user_field: String,
    /// Event ids dropped by the noise filter before graph construction.
    pub denylist: Vec<u32>,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection { user_field: "UserId".into(), denylist: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub mode: SamplingMode,
    /// Neighbors drawn per node (the window length for both paths).
    pub walk_length: usize,
    pub hop_limit: usize,
    pub restart_probability: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            mode: SamplingMode::Rwr,
            walk_length: 40,
            hop_limit: 3,
            restart_probability: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    /// Dimension of content and network embeddings.
    pub embed_dim: usize,
    pub sgns_epochs: usize,
    pub sgns_negatives: usize,
    pub sgns_window: usize,
    pub sgns_learning_rate: f64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            embed_dim: 100,
            sgns_epochs: 5,
            sgns_negatives: 5,
            sgns_window: 5,
            sgns_learning_rate: 0.025,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdaSection {
    /// Rows of the per-node sample matrix; must equal the walk length.
    pub window: usize,
    pub log_constant: f64,
}

impl Default for FdaSection {
    fn default() -> Self {
        FdaSection { window: 40, log_constant: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    pub hidden1: usize,
    pub hidden2: usize,
    /// Fixed weight seed; when absent the seed derives from the master.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
}

impl Default for GnnSection {
    fn default() -> Self {
        GnnSection { hidden1: 64, hidden2: 32, seed_override: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub clusterer: ClustererKind,
    /// Cosine admission threshold for leader clustering, in (0, 1).
    pub delta: f64,
    /// Anomaly threshold multiplier over the training loss.
    pub tau: f64,
    pub kmeans_k: usize,
    pub kmeans_iterations: usize,
    /// Whether feature vectors are length-normalized before clustering.
    /// Off by default: vector length carries the content-energy signal
    /// (rare tokens have large inverse-document-frequency weight), while
    /// cluster admission is cosine similarity and scale-free either way.
    pub normalize: bool,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            clusterer: ClustererKind::Statistical,
            delta: 0.72,
            tau: 1.0,
            kmeans_k: 8,
            kmeans_iterations: 25,
            normalize: false,
        }
    }
}

/// Complete pipeline configuration. Every field has a default; a TOML file
/// may set any subset, and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; all component seeds derive from it by labeled hashing.
    pub seed: u64,
    /// Scoring path: frequency-domain or recurrent embedding.
    pub path: PathKind,
    /// Worker threads for parallel stages; 0 means all available cores.
    pub workers: usize,
    pub ingest: IngestSection,
    pub sampler: SamplerSection,
    pub encoder: EncoderSection,
    pub fda: FdaSection,
    pub gnn: GnnSection,
    pub detector: DetectorSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            path: PathKind::Fda,
            workers: 0,
            ingest: IngestSection::default(),
            sampler: SamplerSection::default(),
            encoder: EncoderSection::default(),
            fda: FdaSection::default(),
            gnn: GnnSection::default(),
            detector: DetectorSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text)
            .map_err(|e| Error::validation("config", format!("unparseable config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.ingest.user_field.is_empty() {
            return Err(Error::validation("ingest.user_field", "must not be empty"));
        }
        self.rwr_config().validate()?;
        if self.fda.window != self.sampler.walk_length {
            return Err(Error::validation(
                "fda.window",
                format!(
                    "window {} must equal sampler.walk_length {} — both size the \
                     per-node sample matrix",
                    self.fda.window, self.sampler.walk_length
                ),
            ));
        }
        self.fda_config().validate()?;
        if self.encoder.embed_dim == 0 {
            return Err(Error::validation("encoder.embed_dim", "must be at least 1"));
        }
        if self.encoder.sgns_window == 0 {
            return Err(Error::validation("encoder.sgns_window", "must be at least 1"));
        }
        if self.encoder.sgns_epochs == 0 {
            return Err(Error::validation("encoder.sgns_epochs", "must be at least 1"));
        }
        if !(self.encoder.sgns_learning_rate > 0.0 && self.encoder.sgns_learning_rate.is_finite())
        {
            return Err(Error::validation("encoder.sgns_learning_rate", "must be positive"));
        }
        if self.gnn.hidden1 == 0 || self.gnn.hidden2 == 0 {
            return Err(Error::validation("gnn.hidden", "layer widths must be at least 1"));
        }
        if !(self.detector.delta > 0.0 && self.detector.delta < 1.0) {
            return Err(Error::validation("detector.delta", "must be in (0, 1)"));
        }
        if !(self.detector.tau > 0.0 && self.detector.tau.is_finite()) {
            return Err(Error::validation("detector.tau", "must be positive"));
        }
        if self.detector.kmeans_k == 0 {
            return Err(Error::validation("detector.kmeans_k", "must be at least 1"));
        }
        if self.detector.kmeans_iterations == 0 {
            return Err(Error::validation("detector.kmeans_iterations", "must be at least 1"));
        }
        Ok(())
    }

    /// Worker-thread count with 0 resolved to the machine's parallelism.
    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(NonZeroUsize::get).unwrap_or(1)
        }
    }

    pub fn rwr_config(&self) -> RwrConfig {
        RwrConfig {
            walk_length: self.sampler.walk_length,
            hop_limit: self.sampler.hop_limit,
            restart_probability: self.sampler.restart_probability,
            seed: derive_seed(self.seed, "rwr"),
        }
    }

    pub fn fda_config(&self) -> FdaConfig {
        FdaConfig { window: self.fda.window, log_constant: self.fda.log_constant }
    }

    /// Seed for token hashing and the field-projection vector.
    pub fn content_seed(&self) -> u64 {
        derive_seed(self.seed, "content")
    }

    pub fn sgns_config(&self) -> SgnsConfig {
        SgnsConfig {
            dim: self.encoder.embed_dim,
            window: self.encoder.sgns_window,
            negatives: self.encoder.sgns_negatives,
            learning_rate: self.encoder.sgns_learning_rate,
            epochs: self.encoder.sgns_epochs,
            seed: derive_seed(self.seed, "network"),
        }
    }

    pub fn gnn_config(&self) -> GnnConfig {
        GnnConfig {
            input_dim: 2 * self.encoder.embed_dim,
            hidden: (self.gnn.hidden1, self.gnn.hidden2),
            output_dim: self.encoder.embed_dim,
            seed: self.gnn.seed_override.unwrap_or_else(|| derive_seed(self.seed, "gnn")),
        }
    }

    /// Seed for k-means initialization.
    pub fn kmeans_seed(&self) -> u64 {
        derive_seed(self.seed, "kmeans")
    }

    /// Seed for benign corpus generation.
    pub fn gen_seed(&self) -> u64 {
        derive_seed(self.seed, "gen")
    }

    /// Seed for anomalous-run injection.
    pub fn inject_seed(&self) -> u64 {
        derive_seed(self.seed, "inject")
    }
}
