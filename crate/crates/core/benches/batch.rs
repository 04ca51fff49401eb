//! Sequential vs thread-pool batch paths over a generated stream.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use gpsloran::classify::classify_bytes;
use gpsloran::convert::merge_sort;
use gpsloran::parse::{parse_lines, ParserRegistry};
use gpsloran::simulate::{generate_stream, Corruption, Scenario};
use gpsloran::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn batch(c: &mut Criterion) {
    // six hours at 1 Hz, roughly 1.6 MB
    let mut s = Scenario::basic(42, Duration::from_secs(6 * 3600));
    s.corruption = Corruption::uniform(0.01);
    let stream = generate_stream(&s);
    let bytes = stream.bytes;
    let lines = classify_bytes(&bytes, Execution::Sequential);
    let registry = ParserRegistry::default();
    let parsed = parse_lines(&lines, s.start, &registry, Execution::Sequential);

    let mut g = c.benchmark_group("classify");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| classify_bytes(black_box(&bytes), exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("parse");
    g.throughput(Throughput::Elements(lines.len() as u64));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| parse_lines(black_box(&lines), s.start, &registry, exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("merge");
    g.throughput(Throughput::Elements(
        (parsed.fixes.len() + parsed.loran.len()) as u64,
    ));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter_batched(
                || (parsed.fixes.clone(), parsed.loran.clone()),
                |(gps, loran)| merge_sort(gps, loran, exec),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
