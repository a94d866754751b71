use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use drift_core::consistency::Guarantee;
use drift_core::depgraph::{find_cycles, dependency_graph, serializability_oracle, Cycle};
use drift_core::encoder::solver::Solver;
use drift_core::encoder::{Assumption, Bounds, Encoder, EncoderConfig};
use drift_core::model::{Program, Schema};
use drift_core::parser::{parse_program, parse_schema};
use drift_core::replay::{parse_conf, parse_history, replay, verify, write_conf, Verdict};
use drift_core::search::{find_anomalies, SearchConfig};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

/// Exit status when a replay does not confirm the expected cycle.
const NOT_CONFIRMED: u8 = 2;

#[derive(Parser)]
#[command(name = "drift", version, about = "Find and replay serializability anomalies in transactional programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search a program for anomalies and write test configurations.
    Analyze(AnalyzeArgs),
    /// Replay a test configuration and check for its cycle.
    Replay(ReplayArgs),
    /// Decide serializability of a small configuration by brute force.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct ProgramArgs {
    /// Program file.
    program: PathBuf,
    /// Schema file; defaults to the program path with a `.schema` extension.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Loop unrolling bound.
    #[arg(long, default_value_t = 2)]
    unroll: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Guarantees of the store, e.g. `ec`, `cc`, `rc+rr`, `ser`.
    #[arg(long, default_value = "ec")]
    spec: Guarantee,
    /// Largest serial prefix used when building configurations.
    #[arg(long, default_value_t = 1)]
    max_p: usize,
    /// Largest number of concurrent transactions.
    #[arg(long, default_value_t = 2)]
    max_t: usize,
    /// Largest cycle length.
    #[arg(long, default_value_t = 4)]
    max_c: usize,
    /// Report only anomalies whose same-transaction edges carry dataflow.
    #[arg(long)]
    internal_only: bool,
    /// Records per table.
    #[arg(long, default_value_t = 4)]
    records: usize,
    /// Number of partitions.
    #[arg(long, default_value_t = 2)]
    partitions: usize,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    /// Solver binary (overridden by DRIFT_SOLVER).
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Write the base SMT problems to the output directory.
    #[arg(long)]
    dump_smt: bool,
    /// Output directory.
    #[arg(long, default_value = "drift-out")]
    out: PathBuf,
    /// Initial-database assumption, `table.field OP int` or `table EMPTY`.
    #[arg(long)]
    assume: Vec<Assumption>,
    /// File with one assumption per line.
    #[arg(long)]
    assume_file: Option<PathBuf>,
    /// Disable the structure-pinned inner enumeration.
    #[arg(long)]
    no_inner_loop: bool,
    /// Keep raw solver models instead of simplified ones.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Test configuration (`.conf`).
    config: PathBuf,
    /// Report (`.json`) whose cycle must manifest; without it any valid
    /// cycle confirms.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Longest cycle looked for without a report.
    #[arg(long, default_value_t = 4)]
    max_c: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Test configuration (`.conf`); the schedule may be empty.
    config: PathBuf,
}

fn read(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} file `{}`", path.display()))
}

fn load(args: &ProgramArgs) -> Result<(Schema, Program)> {
    let schema_path = args.schema.clone().unwrap_or_else(|| args.program.with_extension("schema"));
    let schema_text = read(&schema_path, "schema")?;
    let program_text = read(&args.program, "program")?;
    let schema = parse_schema(&schema_text).with_context(|| format!("in `{}`", schema_path.display()))?;
    let program = parse_program(&program_text, &schema).with_context(|| format!("in `{}`", args.program.display()))?;
    Ok((schema, program))
}

fn analyze(a: AnalyzeArgs) -> Result<ExitCode> {
    ensure!(a.max_t >= 2, "--max-t must be at least 2");
    ensure!(a.max_c >= 3, "--max-c must be at least 3");
    ensure!((1..=26).contains(&a.partitions), "--partitions must be between 1 and 26");
    ensure!(a.records >= 1, "--records must be at least 1");
    ensure!(a.timeout >= 1, "--timeout must be at least 1 second");
    let mut assumptions = a.assume.clone();
    if let Some(path) = &a.assume_file {
        for (i, line) in read(path, "assumption")?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed = line.parse().with_context(|| format!("`{}` line {}", path.display(), i + 1))?;
            assumptions.push(parsed);
        }
    }
    let (schema, program) = load(&a.program)?;
    let budget = Duration::from_secs(a.timeout);
    let solver = Solver::locate(a.solver.as_deref(), budget)?;
    let encoder = EncoderConfig {
        unroll: a.program.unroll,
        records: a.records,
        partitions: a.partitions,
        spec: a.spec,
        internal_only: a.internal_only,
    };
    let enc = Encoder::new(&program, &schema, encoder.clone())?;
    for asm in &assumptions {
        enc.encode(Bounds { serial: 0, txns: 2, len: 3 }, std::slice::from_ref(asm))?;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create `{}`", a.out.display()))?;
    if a.dump_smt {
        for t in 2..=a.max_t {
            for c in 3..=a.max_c {
                let p = enc.encode(Bounds { serial: 0, txns: t, len: c }, &[])?;
                let path = a.out.join(format!("problem-t{t}-c{c}.smt2"));
                fs::write(&path, p.with(&[]) + "(check-sat)\n")
                    .with_context(|| format!("cannot write `{}`", path.display()))?;
            }
        }
    }
    let cfg = SearchConfig {
        encoder,
        max_p: a.max_p,
        max_t: a.max_t,
        max_c: a.max_c,
        budget,
        assumptions,
        inner_loop: !a.no_inner_loop,
        normalize: !a.no_normalize,
    };
    let outcome = find_anomalies(&program, &schema, &cfg, &solver)?;
    let mut lines = String::new();
    for r in &outcome.reports {
        let conf = a.out.join(format!("anomaly-{}.conf", r.id));
        let report = a.out.join(format!("anomaly-{}.json", r.id));
        fs::write(&conf, write_conf(&r.config, &schema)?).with_context(|| format!("cannot write `{}`", conf.display()))?;
        fs::write(&report, serde_json::to_string_pretty(r)?)
            .with_context(|| format!("cannot write `{}`", report.display()))?;
        let line = json!({
            "id": r.id,
            "fingerprint": r.fingerprint,
            "kinds": r.kinds,
            "internal": r.internal,
            "serial": r.serial,
            "replayable": r.replayable,
            "verdict": r.verdict,
            "found_at": r.found_at,
            "config": conf,
            "report": report,
        });
        println!("{line}");
        lines.push_str(&line.to_string());
        lines.push('\n');
    }
    fs::write(a.out.join("reports.jsonl"), lines)?;
    let summary = outcome.summary();
    fs::write(a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn describe(c: &Cycle) -> String {
    let class = if c.internal { "internal" } else { "external" };
    format!("{} ({class})", c.fingerprint())
}

fn replay_cmd(a: ReplayArgs) -> Result<ExitCode> {
    let (schema, program) = load(&a.program)?;
    let text = read(&a.config, "configuration")?;
    let cfg = parse_conf(&text, &schema, a.program.unroll).with_context(|| format!("in `{}`", a.config.display()))?;
    let h = replay(&cfg, &program, &schema)?;
    print!("{}", h.trace());
    let verdict = match &a.report {
        Some(path) => {
            let report: serde_json::Value = serde_json::from_str(&read(path, "report")?)?;
            let cycle: Cycle = serde_json::from_value(report["cycle"].clone())
                .with_context(|| format!("`{}` has no cycle", path.display()))?;
            println!("expected: {}", describe(&cycle));
            verify(&h, &cycle)
        }
        None => match find_cycles(&dependency_graph(&h), a.max_c, false).into_iter().next() {
            Some(c) => Verdict::Confirmed(c),
            None => Verdict::CycleAbsent,
        },
    };
    match &verdict {
        Verdict::Confirmed(c) => {
            println!("manifested: {}", describe(c));
            println!("verdict: confirmed");
            Ok(ExitCode::SUCCESS)
        }
        Verdict::DifferentCycle(found) => {
            for c in found {
                println!("manifested instead: {}", describe(c));
            }
            println!("verdict: different-cycle");
            Ok(ExitCode::from(NOT_CONFIRMED))
        }
        Verdict::CycleAbsent => {
            println!("no valid cycle manifests");
            println!("verdict: cycle-absent");
            Ok(ExitCode::from(NOT_CONFIRMED))
        }
    }
}

fn oracle(a: OracleArgs) -> Result<ExitCode> {
    let (schema, program) = load(&a.program)?;
    let text = read(&a.config, "configuration")?;
    let cfg = parse_history(&text, &schema, a.program.unroll).with_context(|| format!("in `{}`", a.config.display()))?;
    let h = replay(&cfg, &program, &schema)?;
    let v = serializability_oracle(&h, &program, &schema)?;
    if v.serializable {
        println!("serializable: yes");
        if let Some(order) = v.witness {
            let names: Vec<String> = order.iter().map(|i| format!("Ins{}", i + 1)).collect();
            println!("serial order: {}", names.join(" "));
        }
    } else {
        println!("serializable: no");
        let max = 2 * h.steps.len().max(3);
        for c in find_cycles(&dependency_graph(&h), max, false) {
            println!("cycle: {}", describe(&c));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Replay(a) => replay_cmd(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
