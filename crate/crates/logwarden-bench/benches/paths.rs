//! End-to-end detection throughput of the two feature paths on a small
//! mixed corpus. Models are trained once outside the timed region; each
//! iteration scores the full corpus from raw records, exactly as `detect`
//! does in production.

use std::time::Duration;

use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};
use logwarden::config::PathKind;
use logwarden::pipeline;
use logwarden_bench::{base_config, benign_corpus, mixed_corpus};

fn bench_detection_paths(c: &mut Criterion) {
    let benign = benign_corpus(2, 500);
    let (mixed, _mask) = mixed_corpus(2, 500);

    let fda_cfg = base_config();
    let (fda_model, _) = pipeline::train(&fda_cfg, benign.clone()).unwrap();
    let mut gnn_cfg = base_config();
    gnn_cfg.path = PathKind::Gnn;
    let (gnn_model, _) = pipeline::train(&gnn_cfg, benign).unwrap();

    let mut group = c.benchmark_group("detection_path");
    group.sample_size(10).measurement_time(Duration::from_secs(12));
    group.throughput(Throughput::Elements(mixed.len() as u64));
    group.bench_function("spectral", |b| {
        b.iter(|| pipeline::detect(&fda_model, black_box(mixed.clone()), None).unwrap());
    });
    group.bench_function("recurrent", |b| {
        b.iter(|| pipeline::detect(&gnn_model, black_box(mixed.clone()), None).unwrap());
    });
    group.finish();
}

criterion_group!(benches, bench_detection_paths);
criterion_main!(benches);
