//! Experiment harness: timed detection runs, batch-of-one latency probes,
//! side-by-side path benchmarking, and the sampling × path × clusterer
//! ablation table. Everything here reuses the pipeline's own feature
//! functions, so measured numbers exercise exactly the shipping code.

use std::time::Instant;

use serde::Serialize;

use crate::config::{ClustererKind, PathKind, PipelineConfig, SamplingMode};
use crate::detector::{self, evaluate, ClusterModel, Metrics};
use crate::error::{Error, Result};
use crate::fda::FdaExtractor;
use crate::gnn::BiRnnWeights;
use crate::ingest::LogRecord;
use crate::model::ModelFile;
use crate::pipeline::{detect, train, ContentCache, DetectOutput, Pipeline, Verdict};
use crate::provgraph::NodeId;
use crate::sampler;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn p95(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite latencies"));
    let idx = ((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len());
    sorted[idx - 1]
}

/// Bulk detection timed over repeated warm runs of the full record→verdict
/// path (graph build, sampling, encoding, features, scoring); one untimed
/// warm-up pass precedes the timed ones.
pub struct TimedDetect {
    pub output: DetectOutput,
    pub per_run_secs: Vec<f64>,
}

pub fn timed_detect(
    model: &ModelFile,
    records: &[LogRecord],
    runs: usize,
) -> Result<TimedDetect> {
    if runs == 0 {
        return Err(Error::validation("runs", "need at least one run"));
    }
    // One untimed pass first: the timed runs are meant to measure steady
    // state, not first-run allocator growth and page faults.
    let mut output = detect(model, records.to_vec(), None)?;
    let mut per_run_secs = Vec::with_capacity(runs);
    for _ in 0..runs {
        let batch = records.to_vec();
        let t0 = Instant::now();
        output = detect(model, batch, None)?;
        per_run_secs.push(t0.elapsed().as_secs_f64());
    }
    Ok(TimedDetect { output, per_run_secs })
}

/// Batch-of-one per-record latency through sample → encode → feature →
/// score, with steady-state caches (the graph and content tables already
/// hold the corpus). Returns one vector of per-record milliseconds per
/// run, probing `probe` nodes spread evenly across the corpus.
pub fn latency_probe(
    model: &ModelFile,
    records: &[LogRecord],
    probe: usize,
    runs: usize,
) -> Result<Vec<Vec<f64>>> {
    if probe == 0 || runs == 0 {
        return Err(Error::validation("probe", "need probe ≥ 1 and runs ≥ 1"));
    }
    let config = model.config.clone();
    let pipeline = Pipeline::build(&config, records.to_vec())?;
    let encoder = pipeline.content_encoder(model.tfidf.clone())?;
    let n = pipeline.graph().node_count();
    let probe = probe.min(n);
    let step = (n / probe).max(1);
    let ids: Vec<NodeId> = (0..probe).map(|i| NodeId((i * step) as u32)).collect();
    let rwr = config.rwr_config();
    let walk = config.sampler.walk_length;
    let resample = |v: NodeId| match config.sampler.mode {
        SamplingMode::Rwr => sampler::sample(pipeline.graph(), v, &rwr),
        SamplingMode::Direct => sampler::direct_window(pipeline.graph(), v, walk),
    };

    let mut all_runs = Vec::with_capacity(runs);
    match config.path {
        PathKind::Fda => {
            let cache = ContentCache::build(pipeline.graph(), &encoder, false);
            let mut extractor = FdaExtractor::new(config.fda_config())?;
            for _ in 0..runs {
                let mut ms = Vec::with_capacity(ids.len());
                for v in &ids {
                    let t0 = Instant::now();
                    let s = resample(*v)?;
                    let feat = pipeline.fda_feature_for_sample(&cache, &mut extractor, &s)?;
                    let _ = model.clusters.score(&feat)?;
                    ms.push(t0.elapsed().as_secs_f64() * 1e3);
                }
                all_runs.push(ms);
            }
        }
        PathKind::Gnn => {
            let cache = ContentCache::build(pipeline.graph(), &encoder, true);
            let (inputs, _) = pipeline.gnn_node_inputs(&cache, &model.net_table)?;
            let weights = BiRnnWeights::new(&config.gnn_config())?;
            for _ in 0..runs {
                let mut ms = Vec::with_capacity(ids.len());
                for v in &ids {
                    let t0 = Instant::now();
                    let s = resample(*v)?;
                    let feat = pipeline.gnn_feature_for_sample(&weights, &inputs, &s)?;
                    let _ = model.clusters.score(&feat)?;
                    ms.push(t0.elapsed().as_secs_f64() * 1e3);
                }
                all_runs.push(ms);
            }
        }
    }
    Ok(all_runs)
}

/// Joins a verdict stream with a ground-truth mask (indexed by record
/// index) and computes point metrics plus AUC at the model's threshold.
pub fn evaluate_verdicts(
    verdicts: &[Verdict],
    labels: &[bool],
    threshold: f64,
) -> Result<Metrics> {
    let mut scores = Vec::with_capacity(verdicts.len());
    let mut aligned = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        let idx = v.record_index as usize;
        let Some(l) = labels.get(idx) else {
            return Err(Error::validation(
                "labels",
                format!("no label for record index {idx}"),
            ));
        };
        scores.push(v.score);
        aligned.push(*l);
    }
    evaluate(&scores, &aligned, threshold)
}

/// One path's measured run: detection quality plus timing, with the
/// configuration echoed so the experiment can be reproduced exactly.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub path: String,
    pub sampling: String,
    pub clusterer: String,
    pub records_scored: u64,
    pub runs: usize,
    /// Present when ground-truth labels were supplied.
    pub metrics: Option<Metrics>,
    /// Batch-of-one latency: mean/std across runs of per-run means, p95
    /// pooled over every probed record.
    pub latency_ms_mean: f64,
    pub latency_ms_std: f64,
    pub latency_ms_p95: f64,
    /// Bulk throughput over the full detection path, across runs.
    pub throughput_rps_mean: f64,
    pub throughput_rps_std: f64,
    /// Input-byte throughput; zero when the byte count was unknown.
    pub throughput_bps_mean: f64,
    pub throughput_bps_std: f64,
    pub unseen_signatures: u64,
    pub config: PipelineConfig,
}

/// Side-by-side comparison of the two scoring paths on one corpus with
/// identical sampling seeds.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub fda: RunReport,
    pub gnn: RunReport,
    /// records/s, frequency path over recurrent path.
    pub throughput_ratio: f64,
    /// mean batch-of-one latency, frequency path over recurrent path.
    pub latency_ratio: f64,
}

fn build_report(
    config: &PipelineConfig,
    timed: &TimedDetect,
    latency_runs: &[Vec<f64>],
    metrics: Option<Metrics>,
    input_bytes: u64,
) -> RunReport {
    let records = timed.output.verdicts.len() as u64;
    let rps: Vec<f64> = timed.per_run_secs.iter().map(|s| records as f64 / s).collect();
    let bps: Vec<f64> =
        timed.per_run_secs.iter().map(|s| input_bytes as f64 / s).collect();
    let run_means: Vec<f64> =
        latency_runs.iter().map(|r| mean_std(r).0).collect();
    let pooled: Vec<f64> = latency_runs.iter().flatten().copied().collect();
    let (lat_mean, lat_std) = mean_std(&run_means);
    let (rps_mean, rps_std) = mean_std(&rps);
    let (bps_mean, bps_std) = mean_std(&bps);
    RunReport {
        seed: config.seed,
        path: config.path.to_string(),
        sampling: config.sampler.mode.to_string(),
        clusterer: config.detector.clusterer.to_string(),
        records_scored: records,
        runs: timed.per_run_secs.len(),
        metrics,
        latency_ms_mean: lat_mean,
        latency_ms_std: lat_std,
        latency_ms_p95: p95(&pooled),
        throughput_rps_mean: rps_mean,
        throughput_rps_std: rps_std,
        throughput_bps_mean: bps_mean,
        throughput_bps_std: bps_std,
        unseen_signatures: timed.output.unseen_signatures,
        config: config.clone(),
    }
}

/// Measures one trained model on a corpus: `runs` timed bulk passes plus
/// a batch-of-one latency probe, yielding the last run's verdicts and the
/// assembled report.
pub fn report_detect(
    model: &ModelFile,
    records: &[LogRecord],
    labels: Option<&[bool]>,
    input_bytes: u64,
    runs: usize,
    probe: usize,
) -> Result<(DetectOutput, RunReport)> {
    let timed = timed_detect(model, records, runs)?;
    let lat = latency_probe(model, records, probe, runs)?;
    let metrics = match labels {
        Some(l) => Some(evaluate_verdicts(
            &timed.output.verdicts,
            l,
            model.clusters.tau * model.clusters.loss_train,
        )?),
        None => None,
    };
    let report = build_report(&model.config, &timed, &lat, metrics, input_bytes);
    Ok((timed.output, report))
}

/// Trains both paths on one corpus and measures them on another (which
/// may be the same), with identical sampling seeds and windows.
pub fn bench(
    base: &PipelineConfig,
    train_records: &[LogRecord],
    eval_records: &[LogRecord],
    labels: Option<&[bool]>,
    input_bytes: u64,
    runs: usize,
    probe: usize,
) -> Result<BenchReport> {
    let mut reports = Vec::with_capacity(2);
    for path in [PathKind::Fda, PathKind::Gnn] {
        let mut cfg = base.clone();
        cfg.path = path;
        let (model, _) = train(&cfg, train_records.to_vec())?;
        let (_, report) = report_detect(&model, eval_records, labels, input_bytes, runs, probe)?;
        reports.push(report);
    }
    let gnn = reports.pop().expect("two reports");
    let fda = reports.pop().expect("two reports");
    let throughput_ratio = fda.throughput_rps_mean / gnn.throughput_rps_mean;
    let latency_ratio = fda.latency_ms_mean / gnn.latency_ms_mean;
    Ok(BenchReport { fda, gnn, throughput_ratio, latency_ratio })
}

/// One ablation variant's quality and cost.
#[derive(Debug, Clone, Serialize)]
pub struct AblateRow {
    /// Canonical variant name, e.g. "rwr+fda+statistical"; names without
    /// an "rwr+" prefix use the direct-neighbor window.
    pub variant: String,
    pub sampling: String,
    pub path: String,
    pub clusterer: String,
    pub auc: f64,
    pub train_secs: f64,
    pub detect_secs: f64,
    pub clusters: usize,
}

/// The seven canonical variants, in presentation order.
pub const ABLATE_VARIANTS: [&str; 7] = [
    "rwr+gnn+statistical",
    "gnn+statistical",
    "gnn+kmeans",
    "rwr+fda+statistical",
    "rwr+fda+kmeans",
    "fda+statistical",
    "fda+kmeans",
];

fn variant_name(mode: SamplingMode, path: PathKind, clusterer: ClustererKind) -> String {
    let prefix = match mode {
        SamplingMode::Rwr => "rwr+",
        SamplingMode::Direct => "",
    };
    format!("{prefix}{path}+{clusterer}")
}

fn clusterers_for(mode: SamplingMode, path: PathKind) -> &'static [ClustererKind] {
    match (mode, path) {
        (SamplingMode::Rwr, PathKind::Gnn) => &[ClustererKind::Statistical],
        _ => &[ClustererKind::Statistical, ClustererKind::KMeans],
    }
}

fn score_all(clusters: &ClusterModel, feats: &[Vec<f64>]) -> Result<Vec<f64>> {
    feats.iter().map(|f| Ok(clusters.score(f)?.score)).collect()
}

/// Runs the seven-variant ablation: sampling mode × scoring path ×
/// clusterer. Feature sets are computed once per (sampling, path) combo
/// and shared across the clusterer rows, so row timings isolate what
/// actually differs between variants.
pub fn ablate(
    base: &PipelineConfig,
    benign: &[LogRecord],
    mixed: &[LogRecord],
    labels: &[bool],
) -> Result<Vec<AblateRow>> {
    if labels.len() < mixed.len() {
        return Err(Error::validation("labels", "fewer labels than mixed records"));
    }
    let mut rows: Vec<AblateRow> = Vec::with_capacity(7);
    for mode in [SamplingMode::Rwr, SamplingMode::Direct] {
        let mut cfg = base.clone();
        cfg.sampler.mode = mode;

        let t0 = Instant::now();
        let bp = Pipeline::build(&cfg, benign.to_vec())?;
        let benign_build_secs = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let mp = Pipeline::build(&cfg, mixed.to_vec())?;
        let mixed_build_secs = t0.elapsed().as_secs_f64();

        let tfidf = bp.fit_tfidf()?;
        let encoder = bp.content_encoder(tfidf)?;
        let bcache = ContentCache::build(bp.graph(), &encoder, true);
        let mcache = ContentCache::build(mp.graph(), &encoder, true);
        let aligned: Vec<bool> = mp
            .graph()
            .records()
            .iter()
            .map(|r| labels[(r.source_line - 1) as usize])
            .collect();

        // Frequency path features.
        let t0 = Instant::now();
        let benign_fda = bp.fda_features(&bcache)?;
        let fda_train_base = benign_build_secs + t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let mixed_fda = mp.fda_features(&mcache)?;
        let fda_detect_base = mixed_build_secs + t0.elapsed().as_secs_f64();

        // Recurrent path features (network table retrained per sampling
        // mode — its sentences are the sampled windows).
        let t0 = Instant::now();
        let table = bp.train_net_table(&bcache)?;
        let weights = BiRnnWeights::new(&cfg.gnn_config())?;
        let (benign_gnn, _) = bp.gnn_features(&bcache, &table, &weights)?;
        let gnn_train_base = benign_build_secs + t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let (mixed_gnn, _) = mp.gnn_features(&mcache, &table, &weights)?;
        let gnn_detect_base = mixed_build_secs + t0.elapsed().as_secs_f64();

        for (path, bfeats, mfeats, train_base, detect_base) in [
            (PathKind::Gnn, &benign_gnn, &mixed_gnn, gnn_train_base, gnn_detect_base),
            (PathKind::Fda, &benign_fda, &mixed_fda, fda_train_base, fda_detect_base),
        ] {
            for clusterer in clusterers_for(mode, path) {
                let d = &cfg.detector;
                let t0 = Instant::now();
                let clusters = match clusterer {
                    ClustererKind::Statistical => {
                        detector::train_statistical(bfeats, d.delta, d.tau, d.normalize)?
                    }
                    ClustererKind::KMeans => detector::train_kmeans(
                        bfeats,
                        d.kmeans_k,
                        d.kmeans_iterations,
                        d.delta,
                        d.tau,
                        d.normalize,
                        cfg.kmeans_seed(),
                    )?,
                };
                let train_secs = train_base + t0.elapsed().as_secs_f64();
                let t0 = Instant::now();
                let scores = score_all(&clusters, mfeats)?;
                let detect_secs = detect_base + t0.elapsed().as_secs_f64();
                let metrics =
                    evaluate(&scores, &aligned, clusters.tau * clusters.loss_train)?;
                let Some(auc) = metrics.auc else {
                    return Err(Error::validation(
                        "labels",
                        "mixed corpus must contain both classes for the ablation",
                    ));
                };
                rows.push(AblateRow {
                    variant: variant_name(mode, path, *clusterer),
                    sampling: mode.to_string(),
                    path: path.to_string(),
                    clusterer: clusterer.to_string(),
                    auc,
                    train_secs,
                    detect_secs,
                    clusters: clusters.centroids.len(),
                });
            }
        }
    }
    rows.sort_by_key(|r| {
        ABLATE_VARIANTS
            .iter()
            .position(|v| *v == r.variant)
            .expect("variant names stay canonical")
    });
    Ok(rows)
}
