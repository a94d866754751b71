use super::*;
use crate::depgraph::DepKind;
use crate::encoder::solver::{Solver, Verdict as SolverVerdict};
use crate::encoder::{Bounds, Encoder, EncoderConfig};
use crate::parser::{parse_program, parse_schema};
use std::path::Path;
use std::time::Duration;

fn bench(name: &str) -> (Schema, Program) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("benchmarks");
    let schema = parse_schema(&std::fs::read_to_string(dir.join(format!("{name}.schema"))).unwrap()).unwrap();
    let prog = parse_program(&std::fs::read_to_string(dir.join(format!("{name}.txn"))).unwrap(), &schema).unwrap();
    (schema, prog)
}

const PAYMENT: &str = "# initialize:
INSERT INTO
  CUST(c_id,c_pay_cnt)
  VALUES (10,50);
# schedule:
@T1@partitions{A,B}: Ins1-O1
@T2@partitions{A,B}: Ins2-O1
@T3@partitions{A,B}: Ins1-O2
@T4@partitions{A,B}: Ins2-O2
# instances:
Ins1: payment(10)
Ins2: payment(10)
";

#[test]
fn payment_config_round_trips() {
    let (schema, _) = bench("payment");
    let cfg = parse_conf(PAYMENT, &schema, 2).unwrap();
    assert_eq!(cfg.partitions, 2);
    assert_eq!(cfg.schedule.len(), 4);
    assert!(cfg.schedule.iter().all(|s| s.partition == 0 && s.groups.is_empty()));
    assert_eq!(cfg.init[0].key, vec![10]);
    assert_eq!(write_conf(&cfg, &schema).unwrap(), PAYMENT);
}

#[test]
fn split_groups_and_abstract_values_round_trip() {
    let (schema, _) = bench("write_skew");
    let text = "# initialize:\n# schedule:\n@T1@partitions{B}{A}: Ins1-O1\n@T2@partitions{A,B}: Ins2-O1\n# instances:\nIns1: leave(1,2) abs_0=3\nIns2: leave(2,1)\n";
    let cfg = parse_conf(text, &schema, 2).unwrap();
    assert_eq!(cfg.schedule[0].partition, 1);
    assert_eq!(cfg.schedule[0].groups, vec![vec![1], vec![0]]);
    assert_eq!(cfg.instances[0].abs["abs_0"], 3);
    assert_eq!(write_conf(&cfg, &schema).unwrap(), text);
}

#[test]
fn malformed_configs_are_rejected() {
    let (schema, _) = bench("payment");
    let empty = "# initialize:\n# schedule:\n# instances:\nIns1: payment(10)\n";
    assert_eq!(parse_conf(empty, &schema, 2), Err(ConfError::EmptySchedule));
    let unknown = PAYMENT.replace("CUST", "NOPE");
    assert_eq!(parse_conf(&unknown, &schema, 2), Err(ConfError::UnknownTable("NOPE".into())));
    let missing = PAYMENT.replace("Ins2: payment(10)\n", "");
    assert_eq!(parse_conf(&missing, &schema, 2), Err(ConfError::UnknownInstance(2)));
    let bad = PAYMENT.replace("Ins1-O1", "Ins1/O1");
    assert!(matches!(parse_conf(&bad, &schema, 2), Err(ConfError::Syntax { line: 6, .. })));
    let mixed = PAYMENT.replace("@T2@partitions{A,B}", "@T2@partitions{A,B,C}");
    assert!(matches!(parse_conf(&mixed, &schema, 2), Err(ConfError::Syntax { .. })));
}

#[test]
fn payment_replay_loses_an_update() {
    let (schema, prog) = bench("payment");
    let cfg = parse_conf(PAYMENT, &schema, 2).unwrap();
    let h = replay(&cfg, &prog, &schema).unwrap();
    let view = crate::semantics::local_view(h.final_state(), 0..h.final_state().effects.len());
    assert_eq!(view.get("cust", &[10], "c_pay_cnt"), 51);
    let cycles = manifested_cycles(&h, 4);
    let lost = cycles.iter().find(|c| c.kinds() == vec![DepKind::RW, DepKind::ST, DepKind::RW, DepKind::ST]);
    let lost = lost.expect("lost update cycle");
    assert!(lost.internal);
    assert!(verify(&h, lost).is_confirmed());
}

#[test]
fn serial_schedule_does_not_confirm() {
    let (schema, prog) = bench("payment");
    let cfg = parse_conf(PAYMENT, &schema, 2).unwrap();
    let h = replay(&cfg, &prog, &schema).unwrap();
    let expected = manifested_cycles(&h, 4).remove(0);
    let serial = PAYMENT.replace("@T2@partitions{A,B}: Ins2-O1", "@T2@partitions{A,B}: Ins1-O2").replacen(
        "@T3@partitions{A,B}: Ins1-O2",
        "@T3@partitions{A,B}: Ins2-O1",
        1,
    );
    let cfg = parse_conf(&serial, &schema, 2).unwrap();
    let h = replay(&cfg, &prog, &schema).unwrap();
    assert_eq!(verify(&h, &expected), Verdict::CycleAbsent);
}

fn solver() -> Option<Solver> {
    Solver::locate(None, Duration::from_secs(120)).map_err(|e| eprintln!("skipping: {e}")).ok()
}

/// Every model of the encoding replays to an execution exhibiting its cycle.
fn models_replay(name: &str, config: EncoderConfig, bounds: Bounds, rounds: usize) {
    let Some(s) = solver() else { return };
    let mut seen = 0;
    let (schema, prog) = bench(name);
    let enc = Encoder::new(&prog, &schema, config).unwrap();
    let p = enc.encode(bounds, &[]).unwrap();
    let mut blocked = Vec::new();
    for _ in 0..rounds {
        let m = match s.check(&p.with(&[p.block(&blocked)]), &p.model_names()).unwrap() {
            SolverVerdict::Sat(m) => p.decode(&m).unwrap(),
            SolverVerdict::Unsat => break,
            SolverVerdict::Unknown(r) => panic!("unknown: {r}"),
        };
        let cfg = to_config(&m);
        let text = write_conf(&cfg, &schema).unwrap();
        assert_eq!(parse_conf(&text, &schema, cfg.unroll).unwrap(), cfg);
        let h = replay(&cfg, &prog, &schema).unwrap_or_else(|e| panic!("{e}\n{text}"));
        let v = verify(&h, &m.cycle);
        assert!(v.is_confirmed(), "{name}: {} not confirmed ({})\n{text}", m.cycle.fingerprint(), v.label());
        blocked.push(m.cycle.signature());
        seen += 1;
    }
    eprintln!("{name}: {seen} models replayed");
    assert!(seen > 0, "{name}: no model at {bounds:?}");
}

#[test]
fn dirty_read_models_replay() {
    models_replay("dirty_read", EncoderConfig::default(), Bounds { serial: 0, txns: 2, len: 4 }, 6);
}

#[test]
fn lost_update_models_replay() {
    models_replay("lost_update_inc", EncoderConfig::default(), Bounds { serial: 0, txns: 2, len: 4 }, 6);
    models_replay("lost_update_upd", EncoderConfig::default(), Bounds { serial: 0, txns: 2, len: 3 }, 6);
}

#[test]
fn loop_and_scan_models_replay() {
    models_replay("raise", EncoderConfig::default(), Bounds { serial: 1, txns: 2, len: 4 }, 6);
    models_replay("write_skew", EncoderConfig::default(), Bounds { serial: 0, txns: 2, len: 4 }, 6);
    models_replay("similar", EncoderConfig::default(), Bounds { serial: 0, txns: 2, len: 4 }, 6);
}
