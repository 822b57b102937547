use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use warcflow::filters::{payload_key, DedupState};
use warcflow::producer::assign_shards;

fn dedup(c: &mut Criterion) {
    let keys: Vec<_> = (0u32..10_000).map(|i| payload_key(&i.to_le_bytes())).collect();
    let mut group = c.benchmark_group("dedup_10k_keys");
    group.bench_function("bloom", |b| {
        b.iter(|| {
            let mut s = DedupState::bloom(10_000, 0.01).unwrap();
            keys.iter().filter(|k| s.check_and_insert(k)).count()
        })
    });
    group.bench_function("exact", |b| {
        b.iter(|| {
            let mut s = DedupState::exact();
            keys.iter().filter(|k| s.check_and_insert(k)).count()
        })
    });
    group.finish();
}

fn shards(c: &mut Criterion) {
    let mut group = c.benchmark_group("assign_shards");
    for files in [1_000u64, 100_000] {
        let sized: Vec<(PathBuf, u64)> = (0..files)
            .map(|i| (PathBuf::from(format!("s3/crawl/{i:06}.warc.gz")), 1 + (i * 2_654_435_761) % 1_000_000_000))
            .collect();
        group.bench_with_input(BenchmarkId::new("k64", files), &sized, |b, sized| {
            b.iter(|| assign_shards(black_box(sized), 64))
        });
    }
    group.finish();
}

criterion_group!(benches, dedup, shards);
criterion_main!(benches);
