use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use reqc_bench::{synthetic_document, synthetic_store};
use reqc_core::driver::NoopObserver;
use reqc_core::dsl::load_document;
use reqc_core::trace::TraceKey;
use reqc_core::{
    build_graph, compile, parse_document, serialize_document, validate_document, CompileConfig, FixtureBackend,
    ProcessRunner,
};

fn front_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("front_end");
    for nodes in [10, 100, 1000] {
        let doc = synthetic_document(nodes, 4);
        let text = serialize_document(&doc);
        group.bench_with_input(BenchmarkId::new("parse", nodes), &text, |b, t| b.iter(|| parse_document(black_box(t)).unwrap()));
        group.bench_with_input(BenchmarkId::new("serialize", nodes), &doc, |b, d| b.iter(|| serialize_document(black_box(d))));
        group.bench_with_input(BenchmarkId::new("validate", nodes), &doc, |b, d| b.iter(|| validate_document(black_box(d))));
        group.bench_with_input(BenchmarkId::new("schedule", nodes), &doc, |b, d| {
            b.iter(|| build_graph(black_box(d)).unwrap().plan_schedule())
        });
    }
    group.finish();
}

fn trace_queries(c: &mut Criterion) {
    let mut group = c.benchmark_group("trace");
    for n in [100, 1000, 10000] {
        let store = synthetic_store(n);
        let probe = format!("T-{}-2", n / 2);
        group.bench_with_input(BenchmarkId::new("query", n), &store, |b, s| b.iter(|| s.query(TraceKey::Test, black_box(&probe)).len()));
        group.bench_with_input(BenchmarkId::new("scan", n), &store, |b, s| b.iter(|| s.scan(TraceKey::Test, black_box(&probe)).len()));
        let bytes = store.export();
        group.bench_with_input(BenchmarkId::new("import", n), &bytes, |b, bytes| {
            b.iter(|| reqc_core::TraceStore::import(black_box(bytes)).unwrap())
        });
    }
    group.finish();
}

fn fixture_compile(c: &mut Criterion) {
    let examples = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/examples");
    let doc = load_document(examples.join("trainticket.req")).unwrap();
    let fixtures = std::fs::read_to_string(examples.join("trainticket.fixtures.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = CompileConfig::new(dir.path().join("ws"));
    let runner = ProcessRunner::default();
    let mut group = c.benchmark_group("compile");
    group.sample_size(10);
    group.bench_function("sample_project", |b| {
        b.iter(|| {
            let backend = Box::new(FixtureBackend::from_json(&fixtures).unwrap());
            compile(&doc, backend, &runner, &config, &mut NoopObserver).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, front_end, trace_queries, fixture_compile);
criterion_main!(benches);
