use criterion::{criterion_group, criterion_main, Criterion};
use drift_bench::{load, sources};
use drift_core::encoder::solver::Solver;
use drift_core::encoder::{Bounds, Encoder, EncoderConfig};
use drift_core::parser::{parse_program, parse_schema};
use drift_core::replay::{parse_conf, replay, verify};
use drift_core::depgraph::{dependency_graph, find_cycles};
use drift_core::search::{find_anomalies, SearchConfig};
use std::hint::black_box;
use std::time::Duration;

const PAYMENT_CONF: &str = include_str!("../../core/tests/golden/payment.conf");

fn parsing(c: &mut Criterion) {
    let (schema, program) = sources("raise");
    c.bench_function("parse raise", |b| {
        b.iter(|| {
            let s = parse_schema(black_box(&schema)).unwrap();
            parse_program(black_box(&program), &s).unwrap()
        })
    });
}

fn encoding(c: &mut Criterion) {
    let (schema, program) = load("dirty_read");
    let enc = Encoder::new(&program, &schema, EncoderConfig::default()).unwrap();
    c.bench_function("encode dirty_read (1,2,4)", |b| {
        b.iter(|| enc.encode(black_box(Bounds { serial: 1, txns: 2, len: 4 }), &[]).unwrap())
    });
}

fn replaying(c: &mut Criterion) {
    let (schema, program) = load("payment");
    let cfg = parse_conf(PAYMENT_CONF, &schema, 2).unwrap();
    let h = replay(&cfg, &program, &schema).unwrap();
    let cycle = find_cycles(&dependency_graph(&h), 4, false).remove(0);
    c.bench_function("replay and verify payment", |b| {
        b.iter(|| {
            let h = replay(black_box(&cfg), &program, &schema).unwrap();
            verify(&h, &cycle)
        })
    });
}

fn searching(c: &mut Criterion) {
    let Ok(solver) = Solver::locate(None, Duration::from_secs(60)) else {
        eprintln!("no solver found; skipping search benchmarks");
        return;
    };
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    for name in ["dirty_read", "lost_update_inc"] {
        let (schema, program) = load(name);
        let cfg = SearchConfig { max_p: 0, ..SearchConfig::default() };
        group.bench_function(name, |b| b.iter(|| find_anomalies(&program, &schema, &cfg, &solver).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, parsing, encoding, replaying, searching);
criterion_main!(benches);
