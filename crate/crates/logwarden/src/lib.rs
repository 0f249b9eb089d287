//! Streaming host-log anomaly detection over per-user provenance graphs.
//!
//! The pipeline: parse JSON-lines host logs, down-sample each record to five
//! behavioral fields, assemble per-user provenance graphs, sample each node's
//! neighborhood with restart walks, encode the sampled window (hashed
//! character-n-gram content vectors with TF-IDF weighting, plus an optional
//! skip-gram network embedding), turn windows into node features via either
//! a spectral transform or an untrained bidirectional recurrent aggregator,
//! and score nodes against a clustering model of benign behavior.

pub mod config;
pub mod detector;
pub mod encoder;
pub mod error;
pub mod fda;
pub mod gnn;
pub mod harness;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod provgraph;
pub mod sampler;
pub mod seeds;
pub mod synthgen;

pub use config::{ClustererKind, PathKind, PipelineConfig, SamplingMode};
pub use detector::{ClusterModel, DetectionResult, Metrics};
pub use encoder::{ContentEncoder, TfIdfModel, TokenVector};
pub use error::{Error, Result};
pub use fda::{FdaConfig, FdaExtractor, SampleMatrix};
pub use gnn::{BiRnnWeights, GnnConfig};
pub use harness::{AblateRow, BenchReport, RunReport};
pub use ingest::{LogRecord, NoiseFilter, RawLog};
pub use model::ModelFile;
pub use pipeline::{Corpus, DetectOutput, IngestStats, Pipeline, TrainSummary, Verdict};
pub use provgraph::{EdgeKind, NodeId, ProvGraph};
pub use sampler::{NeighborSample, RwrConfig};
pub use synthgen::{BehaviorProfile, InjectionSpec, MalwareFamily};
