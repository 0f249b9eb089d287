//! `logwarden` — host-log anomaly detection over per-user provenance
//! graphs. Subcommands: `gen` (synthetic corpora), `train`, `detect`,
//! `bench` (path comparison), `ablate` (variant table).
//!
//! Exit codes: 0 success; 2 validation/configuration; 3 I/O;
//! 4 malformed data or model; 5 internal invariant failure.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use logwarden::config::{ClustererKind, PathKind, PipelineConfig, SamplingMode};
use logwarden::error::Error;
use logwarden::harness;
use logwarden::model::ModelFile;
use logwarden::pipeline::{
    self, read_corpus_path, ContentCache, Corpus, Pipeline,
};
use logwarden::provgraph::build_graph;
use logwarden::synthgen::{self, BehaviorProfile, InjectionSpec, MalwareFamily};

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(
    name = "logwarden",
    version,
    about = "Host-log anomaly detection over per-user provenance graphs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic benign (and optionally mixed labeled) corpora.
    Gen(GenArgs),
    /// Train an unsupervised detection model from a benign corpus.
    Train(TrainArgs),
    /// Score a corpus with a trained model, emitting per-record verdicts.
    Detect(DetectArgs),
    /// Compare the two scoring paths on one corpus.
    Bench(BenchArgs),
    /// Run the sampling × path × clusterer variant table.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Fda,
    Gnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Rwr,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClustererArg {
    Statistical,
    Kmeans,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Ransomware,
    Trojan,
    Worm,
    Rootkit,
    Spyware,
    Botnet,
}

impl FamilyArg {
    fn to_family(self) -> MalwareFamily {
        match self {
            FamilyArg::Ransomware => MalwareFamily::Ransomware,
            FamilyArg::Trojan => MalwareFamily::Trojan,
            FamilyArg::Worm => MalwareFamily::Worm,
            FamilyArg::Rootkit => MalwareFamily::Rootkit,
            FamilyArg::Spyware => MalwareFamily::Spyware,
            FamilyArg::Botnet => MalwareFamily::Botnet,
        }
    }
}

/// Tuning flags shared by the commands that build a pipeline
/// configuration. Flags override values from `--config`, which overrides
/// the built-in defaults.
#[derive(Args, Clone)]
struct TuningOpts {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every component seed derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// JSON field carrying the user identity.
    #[arg(long)]
    user_field: Option<String>,
    /// Comma-separated event ids dropped by the noise filter.
    #[arg(long, value_delimiter = ',')]
    denylist: Option<Vec<u32>>,
    /// Scoring path.
    #[arg(long, value_enum)]
    path: Option<PathArg>,
    /// Neighborhood sampling mode.
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    /// Neighbors sampled per node (also the feature window length).
    #[arg(long = "walk-len")]
    walk_len: Option<usize>,
    /// Walk hop limit before a forced restart.
    #[arg(long)]
    hops: Option<usize>,
    /// Restart probability per walk step.
    #[arg(long = "restart-p")]
    restart_p: Option<f64>,
    /// Content/network embedding dimension.
    #[arg(long = "embed-dim")]
    embed_dim: Option<usize>,
    /// Skip-gram training epochs.
    #[arg(long = "sg-epochs")]
    sg_epochs: Option<usize>,
    /// Skip-gram negative samples per pair.
    #[arg(long = "sg-neg")]
    sg_neg: Option<usize>,
    /// Skip-gram context window.
    #[arg(long = "sg-window")]
    sg_window: Option<usize>,
    /// Sample-matrix row count for the frequency path (must equal
    /// --walk-len; set automatically when only --walk-len is given).
    #[arg(long = "dft-window")]
    dft_window: Option<usize>,
    /// Log-scaling constant for spectral features.
    #[arg(long = "log-c")]
    log_c: Option<f64>,
    /// Recurrent layer widths as "h1,h2".
    #[arg(long = "gnn-hidden")]
    gnn_hidden: Option<String>,
    /// Fixed recurrent weight seed (default: derived from --seed).
    #[arg(long = "gnn-seed")]
    gnn_seed: Option<u64>,
    /// Cosine admission threshold for leader clustering, in (0, 1).
    #[arg(long)]
    delta: Option<f64>,
    /// Anomaly threshold multiplier over the training loss.
    #[arg(long)]
    tau: Option<f64>,
    /// Clustering rule.
    #[arg(long, value_enum)]
    clusterer: Option<ClustererArg>,
    /// Cluster count for k-means.
    #[arg(long = "kmeans-k")]
    kmeans_k: Option<usize>,
}

impl TuningOpts {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_toml(&read_text(path)?)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(u) = &self.user_field {
            cfg.ingest.user_field = u.clone();
        }
        if let Some(d) = &self.denylist {
            cfg.ingest.denylist = d.clone();
        }
        if let Some(p) = self.path {
            cfg.path = match p {
                PathArg::Fda => PathKind::Fda,
                PathArg::Gnn => PathKind::Gnn,
            };
        }
        if let Some(m) = self.sampling {
            cfg.sampler.mode = match m {
                SamplingArg::Rwr => SamplingMode::Rwr,
                SamplingArg::Direct => SamplingMode::Direct,
            };
        }
        if let Some(k) = self.walk_len {
            cfg.sampler.walk_length = k;
            // The feature window must match; follow unless explicitly set.
            if self.dft_window.is_none() {
                cfg.fda.window = k;
            }
        }
        if let Some(h) = self.hops {
            cfg.sampler.hop_limit = h;
        }
        if let Some(p) = self.restart_p {
            cfg.sampler.restart_probability = p;
        }
        if let Some(e) = self.embed_dim {
            cfg.encoder.embed_dim = e;
        }
        if let Some(v) = self.sg_epochs {
            cfg.encoder.sgns_epochs = v;
        }
        if let Some(v) = self.sg_neg {
            cfg.encoder.sgns_negatives = v;
        }
        if let Some(v) = self.sg_window {
            cfg.encoder.sgns_window = v;
        }
        if let Some(v) = self.dft_window {
            cfg.fda.window = v;
        }
        if let Some(v) = self.log_c {
            cfg.fda.log_constant = v;
        }
        if let Some(text) = &self.gnn_hidden {
            let parts: Vec<&str> = text.split(',').collect();
            let parsed: Option<(usize, usize)> = match parts.as_slice() {
                [a, b] => a.trim().parse().ok().zip(b.trim().parse().ok()),
                _ => None,
            };
            let Some((h1, h2)) = parsed else {
                return Err(Error::validation(
                    "gnn-hidden",
                    format!("expected \"h1,h2\", got {text:?}"),
                ));
            };
            cfg.gnn.hidden1 = h1;
            cfg.gnn.hidden2 = h2;
        }
        if let Some(s) = self.gnn_seed {
            cfg.gnn.seed_override = Some(s);
        }
        if let Some(v) = self.delta {
            cfg.detector.delta = v;
        }
        if let Some(v) = self.tau {
            cfg.detector.tau = v;
        }
        if let Some(c) = self.clusterer {
            cfg.detector.clusterer = match c {
                ClustererArg::Statistical => ClustererKind::Statistical,
                ClustererArg::Kmeans => ClustererKind::KMeans,
            };
        }
        if let Some(k) = self.kmeans_k {
            cfg.detector.kmeans_k = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    /// Output path for the benign JSON-lines corpus.
    #[arg(long = "benign-out")]
    benign_out: PathBuf,
    /// Also write a mixed corpus with injected anomalous runs.
    #[arg(long = "mixed-out")]
    mixed_out: Option<PathBuf>,
    /// Ground-truth labels for the mixed corpus (JSON-lines).
    #[arg(long = "labels-out")]
    labels_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long = "logs-per-user", default_value_t = 5000)]
    logs_per_user: usize,
    /// Anomalous fraction of the final mixed stream, in (0, 0.5].
    #[arg(long = "inject-rate", default_value_t = 0.05)]
    inject_rate: f64,
    /// Anomaly family template for injection.
    #[arg(long, value_enum, default_value = "ransomware")]
    family: FamilyArg,
    /// Behavior profile TOML (defaults built in).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Injection template TOML (overrides --family and --inject-rate).
    #[arg(long = "inject-spec")]
    inject_spec: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    tuning: TuningOpts,
    /// Benign training corpus (JSON-lines).
    #[arg(long)]
    input: PathBuf,
    /// Output path for the trained model.
    #[arg(long)]
    model: PathBuf,
    /// Write the provenance graph as PREFIX.edges.txt + PREFIX.nodes.csv.
    #[arg(long = "dump-graph")]
    dump_graph: Option<String>,
    /// Write per-node training features as CSV.
    #[arg(long = "dump-features")]
    dump_features: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Corpus to score (JSON-lines).
    #[arg(long)]
    input: PathBuf,
    /// Verdict stream destination (default: stdout).
    #[arg(long)]
    verdicts: Option<PathBuf>,
    /// Ground-truth labels (JSON-lines) to compute metrics.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Write a timed run report (JSON) here; enables repeated runs.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Timed runs for the report.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Records probed for batch-of-one latency in the report.
    #[arg(long, default_value_t = 256)]
    probe: usize,
    /// Worker-thread override (machine property, not part of the model).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    tuning: TuningOpts,
    /// Benign training corpus.
    #[arg(long)]
    input: PathBuf,
    /// Corpus to measure on (default: the training corpus).
    #[arg(long = "eval-input")]
    eval_input: Option<PathBuf>,
    /// Ground-truth labels for the measured corpus.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Write the comparison report (JSON) here as well as stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 256)]
    probe: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    tuning: TuningOpts,
    /// Benign training corpus.
    #[arg(long)]
    benign: PathBuf,
    /// Labeled mixed corpus.
    #[arg(long)]
    mixed: PathBuf,
    /// Ground-truth labels for the mixed corpus.
    #[arg(long)]
    labels: PathBuf,
    /// Write the variant rows (JSON) here as well as stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation { .. } => 2,
        Error::Io(_) => 3,
        Error::Parse { .. }
        | Error::ModelFormat(_)
        | Error::NonFinite { .. }
        | Error::DimensionMismatch { .. } => 4,
        Error::UnknownNode(_) => 5,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Detect(a) => cmd_detect(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Ablate(a) => cmd_ablate(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(Error::Io)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::validation("report", format!("unserializable: {e}")))?;
    println!("{text}");
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::validation("report", format!("unserializable: {e}")))?;
    write_bytes(path, text.as_bytes())
}

/// One ground-truth line: `{"record_index":N,"malicious":bool}`.
#[derive(Serialize, Deserialize)]
struct LabelLine {
    record_index: u64,
    malicious: bool,
}

fn write_labels(path: &Path, labels: &[bool]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, l) in labels.iter().enumerate() {
        let line = LabelLine { record_index: i as u64, malicious: *l };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<bool>> {
    let r = BufReader::new(File::open(path)?);
    let mut entries: Vec<Option<bool>> = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(&line).map_err(|_| Error::Parse {
            line: no as u64 + 1,
            reason: "expected {\"record_index\":N,\"malicious\":bool}".into(),
        })?;
        let idx = parsed.record_index as usize;
        if idx >= entries.len() {
            entries.resize(idx + 1, None);
        }
        if entries[idx].is_some() {
            return Err(Error::validation(
                "labels",
                format!("duplicate record_index {idx}"),
            ));
        }
        entries[idx] = Some(parsed.malicious);
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            e.ok_or_else(|| Error::validation("labels", format!("missing record_index {i}")))
        })
        .collect()
}

fn load_corpus(path: &Path, cfg: &PipelineConfig) -> Result<Corpus> {
    let corpus = read_corpus_path(path, &cfg.ingest.user_field, &cfg.ingest.denylist)?;
    let s = &corpus.stats;
    if s.parse_errors + s.missing_user + s.dropped_fields > 0 {
        eprintln!(
            "note: skipped {} unparseable, {} user-less, {} incomplete line(s) of {}",
            s.parse_errors, s.missing_user, s.dropped_fields, s.lines
        );
    }
    Ok(corpus)
}

#[derive(Serialize)]
struct GenSummary {
    users: usize,
    logs_per_user: usize,
    seed: u64,
    benign_records: usize,
    mixed_records: Option<usize>,
    malicious_records: Option<usize>,
    family: Option<String>,
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let profile = match &a.profile {
        Some(p) => BehaviorProfile::from_toml(&read_text(p)?)?,
        None => BehaviorProfile::default(),
    };
    if a.mixed_out.is_some() != a.labels_out.is_some() {
        return Err(Error::validation(
            "gen",
            "--mixed-out and --labels-out must be given together",
        ));
    }
    let benign = synthgen::gen_benign(&profile, a.users, a.logs_per_user, a.seed)?;
    {
        let mut w = BufWriter::new(File::create(&a.benign_out)?);
        synthgen::write_jsonl(&benign, &mut w)?;
        w.flush()?;
    }
    let mut summary = GenSummary {
        users: a.users,
        logs_per_user: a.logs_per_user,
        seed: a.seed,
        benign_records: benign.len(),
        mixed_records: None,
        malicious_records: None,
        family: None,
    };
    if let (Some(mixed_out), Some(labels_out)) = (&a.mixed_out, &a.labels_out) {
        let spec: InjectionSpec = match &a.inject_spec {
            Some(p) => InjectionSpec::from_toml(&read_text(p)?)?,
            None => a.family.to_family().spec(a.inject_rate),
        };
        // Injection draws from its own seed so the benign stream is
        // byte-identical with and without mixing.
        let (mixed, labels) = synthgen::inject(&benign, &spec, a.seed.wrapping_add(1))?;
        let mut w = BufWriter::new(File::create(mixed_out)?);
        synthgen::write_jsonl(&mixed, &mut w)?;
        w.flush()?;
        write_labels(labels_out, &labels)?;
        summary.mixed_records = Some(mixed.len());
        summary.malicious_records = Some(labels.iter().filter(|l| **l).count());
        summary.family = Some(spec.family.clone());
    }
    print_json(&summary)
}

#[derive(Serialize)]
struct TrainOutput {
    nodes: usize,
    clusters: usize,
    loss_train: f64,
    degenerate_windows: u64,
    model_bytes: u64,
    ingest: logwarden::pipeline::IngestStats,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = a.tuning.resolve()?;
    let corpus = load_corpus(&a.input, &cfg)?;
    if let Some(prefix) = &a.dump_graph {
        let graph = build_graph(corpus.records.clone());
        let mut edges = BufWriter::new(File::create(format!("{prefix}.edges.txt"))?);
        graph.dump_edges(&mut edges)?;
        edges.flush()?;
        let mut nodes = BufWriter::new(File::create(format!("{prefix}.nodes.csv"))?);
        graph.dump_nodes(&mut nodes)?;
        nodes.flush()?;
    }
    let (model, summary) = pipeline::train(&cfg, corpus.records.clone())?;
    model.save_to_path(&a.model)?;
    if let Some(path) = &a.dump_features {
        let features = recompute_features(&model, corpus.records)?;
        let mut w = BufWriter::new(File::create(path)?);
        pipeline::write_features_csv(&features, &mut w)?;
        w.flush()?;
    }
    let model_bytes = std::fs::metadata(&a.model)?.len();
    print_json(&TrainOutput {
        nodes: summary.nodes,
        clusters: summary.clusters,
        loss_train: summary.loss_train,
        degenerate_windows: summary.degenerate_windows,
        model_bytes,
        ingest: corpus.stats,
    })
}

/// Rebuilds the per-node feature matrix a model would produce on a
/// corpus, for CSV dumps.
fn recompute_features(
    model: &ModelFile,
    records: Vec<logwarden::ingest::LogRecord>,
) -> Result<Vec<Vec<f64>>> {
    let p = Pipeline::build(&model.config, records)?;
    let encoder = p.content_encoder(model.tfidf.clone())?;
    match model.config.path {
        PathKind::Fda => {
            let cache = ContentCache::build(p.graph(), &encoder, false);
            p.fda_features(&cache)
        }
        PathKind::Gnn => {
            let cache = ContentCache::build(p.graph(), &encoder, true);
            let weights = logwarden::gnn::BiRnnWeights::new(&model.config.gnn_config())?;
            Ok(p.gnn_features(&cache, &model.net_table, &weights)?.0)
        }
    }
}

#[derive(Serialize)]
struct DetectSummary {
    records_scored: usize,
    anomalies: usize,
    mean_score: f64,
    loss_train: f64,
    unseen_signatures: u64,
    metrics: Option<logwarden::detector::Metrics>,
    ingest: logwarden::pipeline::IngestStats,
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    let model = ModelFile::load_from_path(&a.model)?;
    let corpus = load_corpus(&a.input, &model.config)?;
    let labels = a.labels.as_deref().map(read_labels).transpose()?;

    let output = if let Some(report_path) = &a.report {
        let (output, report) = harness::report_detect(
            &model,
            &corpus.records,
            labels.as_deref(),
            corpus.stats.bytes,
            a.runs,
            a.probe,
        )?;
        write_json(report_path, &report)?;
        output
    } else {
        pipeline::detect(&model, corpus.records.clone(), a.workers)?
    };

    match &a.verdicts {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            pipeline::write_verdicts(&output.verdicts, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            pipeline::write_verdicts(&output.verdicts, &mut w)?;
            w.flush()?;
        }
    }

    let metrics = match &labels {
        Some(l) => Some(harness::evaluate_verdicts(
            &output.verdicts,
            l,
            model.clusters.tau * model.clusters.loss_train,
        )?),
        None => None,
    };
    let summary = DetectSummary {
        records_scored: output.verdicts.len(),
        anomalies: output.verdicts.iter().filter(|v| v.is_anomaly).count(),
        mean_score: output.mean_score,
        loss_train: model.clusters.loss_train,
        unseen_signatures: output.unseen_signatures,
        metrics,
        ingest: corpus.stats,
    };
    // The verdict stream owns stdout when unrouted; the summary then goes
    // to stderr so the stream stays machine-parseable.
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::validation("report", format!("unserializable: {e}")))?;
    if a.verdicts.is_some() {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let cfg = a.tuning.resolve()?;
    let train_corpus = load_corpus(&a.input, &cfg)?;
    let (eval_records, eval_bytes) = match &a.eval_input {
        Some(p) => {
            let c = load_corpus(p, &cfg)?;
            (c.records, c.stats.bytes)
        }
        None => (train_corpus.records.clone(), train_corpus.stats.bytes),
    };
    let labels = a.labels.as_deref().map(read_labels).transpose()?;
    let report = harness::bench(
        &cfg,
        &train_corpus.records,
        &eval_records,
        labels.as_deref(),
        eval_bytes,
        a.runs,
        a.probe,
    )?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    print_json(&report)
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let cfg = a.tuning.resolve()?;
    let benign = load_corpus(&a.benign, &cfg)?;
    let mixed = load_corpus(&a.mixed, &cfg)?;
    let labels = read_labels(&a.labels)?;
    let rows = harness::ablate(&cfg, &benign.records, &mixed.records, &labels)?;
    if let Some(path) = &a.report {
        write_json(path, &rows)?;
    }
    println!(
        "{:<22} {:>6} {:>12} {:>12} {:>9}",
        "variant", "auc", "train_s", "detect_s", "clusters"
    );
    for r in &rows {
        println!(
            "{:<22} {:>6.3} {:>12.3} {:>12.3} {:>9}",
            r.variant, r.auc, r.train_secs, r.detect_secs, r.clusters
        );
    }
    Ok(())
}
