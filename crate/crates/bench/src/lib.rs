//! Shared fixtures for the pipeline benchmarks.

use drift_core::model::{Program, Schema};
use drift_core::parser::{parse_program, parse_schema};
use std::path::PathBuf;

/// Bundled benchmark programs, by file stem.
pub const BENCHMARKS: &[&str] = &[
    "dirty_read",
    "lost_update_inc",
    "lost_update_upd",
    "write_skew",
    "partition",
    "payment",
    "raise",
    "similar",
    "disjoint",
];

pub fn benchmark_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/benchmarks")
}

/// Schema and program text of a bundled benchmark.
pub fn sources(name: &str) -> (String, String) {
    let dir = benchmark_dir();
    let read = |ext: &str| {
        let path = dir.join(format!("{name}.{ext}"));
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
    };
    (read("schema"), read("txn"))
}

/// Parsed schema and program of a bundled benchmark.
pub fn load(name: &str) -> (Schema, Program) {
    let (schema, program) = sources(name);
    let schema = parse_schema(&schema).expect("bundled schema parses");
    let program = parse_program(&program, &schema).expect("bundled program parses");
    (schema, program)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_benchmark_loads() {
        for name in BENCHMARKS {
            let (_, p) = load(name);
            assert!(!p.transactions.is_empty(), "{name}");
        }
    }
}
