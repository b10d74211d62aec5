//! Parallel vs sequential timings for the data-parallel stages.
//!
//! The sequential variants run inside a one-thread pool; build with
//! `--no-default-features` to compare against a build without rayon at all.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hybrid_anomaly::baselines::{encode_numeric, isolation_forest_scores, lof_scores, standardize};
use hybrid_anomaly::data::{generate_synthetic, label_real_vs_synthetic};
use hybrid_anomaly::forest::{build_forest, distance_matrix, ForestParams};
use hybrid_anomaly::par;
use hybrid_anomaly::scoring::{score_pipeline, ScoreConfig};
use hybrid_anomaly::synth::{gaussian_blobs, SynthParams};

fn blobs(per_cluster: usize) -> hybrid_anomaly::data::FeatureMatrix {
    gaussian_blobs(&SynthParams {
        per_cluster,
        ..SynthParams::default()
    })
    .unwrap()
    .matrix()
}

fn forest_stages(c: &mut Criterion) {
    let x = blobs(150);
    let data = label_real_vs_synthetic(&x, &generate_synthetic(&x, 1)).unwrap();
    let params = ForestParams {
        trees: 100,
        seed: 2,
        ..ForestParams::default()
    };
    let forest = build_forest(&data, &params).unwrap();

    let mut g = c.benchmark_group("forest");
    g.sample_size(10);
    g.bench_function("build/parallel", |b| {
        b.iter(|| build_forest(black_box(&data), &params))
    });
    g.bench_function("build/sequential", |b| {
        b.iter(|| par::sequential(|| build_forest(black_box(&data), &params)))
    });
    g.bench_function("distance/parallel", |b| {
        b.iter(|| distance_matrix(&forest, black_box(&x)))
    });
    g.bench_function("distance/sequential", |b| {
        b.iter(|| par::sequential(|| distance_matrix(&forest, black_box(&x))))
    });
    g.finish();
}

fn pipeline_scaling(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    let config = ScoreConfig {
        trees: 50,
        ..ScoreConfig::default()
    };
    for per_cluster in [75, 150, 300] {
        let x = blobs(per_cluster);
        let n = x.n_rows();
        g.bench_with_input(BenchmarkId::new("parallel", n), &x, |b, x| {
            b.iter(|| score_pipeline(x, &config))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &x, |b, x| {
            b.iter(|| par::sequential(|| score_pipeline(x, &config)))
        });
    }
    g.finish();
}

fn baselines(c: &mut Criterion) {
    let x = standardize(&encode_numeric(&blobs(150)));
    let mut g = c.benchmark_group("baselines");
    g.sample_size(20);
    g.bench_function("iforest/parallel", |b| {
        b.iter(|| isolation_forest_scores(&x, 100, 256, 0))
    });
    g.bench_function("iforest/sequential", |b| {
        b.iter(|| par::sequential(|| isolation_forest_scores(&x, 100, 256, 0)))
    });
    g.bench_function("lof/parallel", |b| b.iter(|| lof_scores(&x, 6)));
    g.bench_function("lof/sequential", |b| {
        b.iter(|| par::sequential(|| lof_scores(&x, 6)))
    });
    g.finish();
}

criterion_group!(benches, forest_stages, pipeline_scaling, baselines);
criterion_main!(benches);
