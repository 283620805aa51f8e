//! Decode throughput and batch-forward latency as depth shrinks.
//!
//! Run with: `cargo bench -p layertrim-bench`

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use layertrim_bench::{bench_config, model_at_compression};

fn greedy_decode(c: &mut Criterion) {
    let cfg = bench_config();
    let n_new = cfg.max_seq_len - 1;
    let mut group = c.benchmark_group("greedy_decode");
    group.throughput(Throughput::Elements(n_new as u64));
    for (label, fraction) in [("full", 0.0), ("drop25", 0.25), ("drop50", 0.5), ("drop75", 0.75)] {
        let model = model_at_compression(fraction);
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| black_box(model.generate(black_box(&[0u32]), n_new).unwrap()))
        });
    }
    group.finish();
}

fn batch_forward(c: &mut Criterion) {
    let cfg = bench_config();
    let tokens: Vec<u32> = (0..cfg.max_seq_len as u32).map(|i| i % cfg.vocab_size as u32).collect();
    let mut group = c.benchmark_group("batch_forward");
    group.throughput(Throughput::Elements(tokens.len() as u64));
    for (label, fraction) in [("full", 0.0), ("drop50", 0.5)] {
        let model = model_at_compression(fraction);
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| black_box(model.forward(black_box(&tokens)).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, greedy_decode, batch_forward);
criterion_main!(benches);
