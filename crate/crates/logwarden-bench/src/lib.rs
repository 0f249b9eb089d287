//! Shared fixtures for the benchmark targets: deterministic synthetic
//! corpora and pre-built graphs at bench-friendly scales.

use logwarden::config::PipelineConfig;
use logwarden::ingest::LogRecord;
use logwarden::provgraph::{build_graph, ProvGraph};
use logwarden::synthgen::{gen_benign, inject, BehaviorProfile, MalwareFamily};

pub const SEED: u64 = 42;

/// Small benign corpus: `users × logs_per_user` records under the default
/// behavior profile.
pub fn benign_corpus(users: usize, logs_per_user: usize) -> Vec<LogRecord> {
    gen_benign(&BehaviorProfile::default(), users, logs_per_user, SEED)
        .expect("fixture generation is infallible at these scales")
}

/// The same corpus with 5% anomalous records spliced in, plus ground truth.
pub fn mixed_corpus(users: usize, logs_per_user: usize) -> (Vec<LogRecord>, Vec<bool>) {
    let benign = benign_corpus(users, logs_per_user);
    let spec = MalwareFamily::Ransomware.spec(0.05);
    inject(&benign, &spec, SEED + 1).expect("fixture injection is infallible at these scales")
}

/// Provenance graph over a small benign corpus.
pub fn benign_graph(users: usize, logs_per_user: usize) -> ProvGraph {
    build_graph(benign_corpus(users, logs_per_user))
}

/// Default pipeline configuration (restart-walk sampling, spectral path).
pub fn base_config() -> PipelineConfig {
    PipelineConfig::default()
}
