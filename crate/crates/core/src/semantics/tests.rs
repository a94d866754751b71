use super::*;
use crate::consistency::{check_history, Guarantee};
use crate::parser::{parse_program, parse_schema};
use proptest::prelude::*;

fn load(schema: &str, prog: &str) -> (Schema, Program) {
    let s = parse_schema(schema).unwrap();
    let p = parse_program(prog, &s).unwrap();
    (s, p)
}

fn dirty() -> (Schema, Program) {
    load(include_str!("../../benchmarks/dirty_read.schema"), include_str!("../../benchmarks/dirty_read.txn"))
}

fn raise() -> (Schema, Program) {
    load(include_str!("../../benchmarks/raise.schema"), include_str!("../../benchmarks/raise.txn"))
}

fn inc() -> (Schema, Program) {
    load(
        include_str!("../../benchmarks/lost_update_inc.schema"),
        include_str!("../../benchmarks/lost_update_inc.txn"),
    )
}

fn row(table: &str, key: i64, vals: &[(&str, i64)]) -> InitRow {
    InitRow {
        table: table.into(),
        key: vec![key],
        values: vals.iter().map(|(f, v)| (f.to_string(), *v)).collect(),
    }
}

fn inst(txn: &str, args: &[i64]) -> Instance {
    Instance { txn: txn.into(), args: args.to_vec(), abs: BTreeMap::new() }
}

fn step(instance: usize, site: usize) -> ScheduleStep {
    ScheduleStep { instance, site, partition: 0, groups: vec![] }
}

fn fig7_init() -> Vec<InitRow> {
    vec![
        row("emp", 1, &[("id", 1), ("sal", 85), ("age", 22), ("alive", 1)]),
        row("emp", 2, &[("id", 2), ("sal", 50), ("age", 30), ("alive", 0)]),
        row("emp", 3, &[("id", 3), ("sal", 70), ("age", 40), ("alive", 1)]),
    ]
}

fn write(state: &mut SystemState, field: &str, v: i64) -> usize {
    let i = state.effects.len();
    state.effects.push(Effect {
        id: EffectId { step: i, ord: 0 },
        kind: EffectKind::Write,
        table: "t".into(),
        key: vec![1],
        field: field.into(),
        value: Some(v),
        used: true,
        query: None,
        txn: None,
        partition: 0,
    });
    state.ar.push(i as u64);
    i
}

#[test]
fn local_view_takes_ar_latest() {
    let mut s = SystemState::new(1);
    let a = write(&mut s, "f", 0);
    let b = write(&mut s, "f", 1);
    assert_eq!(local_view(&s, [a, b]).get("t", &[1], "f"), 1);
    assert_eq!(local_view(&s, [b, a]).get("t", &[1], "f"), 1);
    s.ar = vec![5, 2];
    assert_eq!(local_view(&s, [a, b]).get("t", &[1], "f"), 0);
}

#[test]
fn local_view_empty_is_dead() {
    let s = SystemState::new(1);
    let v = local_view(&s, []);
    assert!(!v.alive("t", &[1]));
    assert_eq!(v.get("t", &[7], "f"), 0);
}

#[test]
fn fig7_initial_view() {
    let (s, p) = raise();
    let o = ExecutionOracle { partitions: 1, unroll: 2, instances: vec![], schedule: vec![], init: fig7_init() };
    let h = run(&o, &p, &s).unwrap();
    let st = h.final_state();
    let v = local_view(st, 0..st.effects.len());
    assert!(v.alive("emp", &[1]) && !v.alive("emp", &[2]) && v.alive("emp", &[3]));
    assert_eq!(v.get("emp", &[1], "sal"), 85);
    assert_eq!(v.get("emp", &[3], "age"), 40);
}

#[test]
fn eval_examples() {
    let mut env = Env::default();
    let r: Row = [("age".to_string(), 22)].into();
    let c = BoolExpr::Cmp(Expr::This("age".into()), CmpOp::Lt, Expr::Int(35));
    assert!(eval_bool(&c, &env, Some(&r)).unwrap());
    env.vars.insert("v".into(), vec![[("sal".to_string(), 85), ("id".to_string(), 1)].into()]);
    let e = Expr::Bin(
        BinOp::Add,
        Box::new(Expr::Proj("sal".into(), "v".into(), Box::new(Expr::Int(1)))),
        Box::new(Expr::Int(1)),
    );
    assert_eq!(eval_expr(&e, &env, None).unwrap(), 86);
    assert!(eval_bool(&BoolExpr::True, &env, None).unwrap());
}

#[test]
fn eval_faults() {
    let env = Env::default();
    let div = Expr::Bin(BinOp::Div, Box::new(Expr::Int(1)), Box::new(Expr::Int(0)));
    assert_eq!(eval_expr(&div, &env, None), Err(Fault::DivByZero));
    let proj = Expr::Proj("sal".into(), "v".into(), Box::new(Expr::Int(1)));
    assert_eq!(eval_expr(&proj, &env, None), Err(Fault::UnboundVar("v".into())));
    let mut env = Env::default();
    env.vars.insert("v".into(), vec![]);
    assert!(matches!(eval_expr(&proj, &env, None), Err(Fault::ProjOutOfBounds { .. })));
    let big = Expr::Bin(BinOp::Mul, Box::new(Expr::Int(i64::MAX)), Box::new(Expr::Int(2)));
    assert_eq!(eval_expr(&big, &Env::default(), None), Err(Fault::Overflow));
    let neg = Expr::Bin(BinOp::Div, Box::new(Expr::Int(-7)), Box::new(Expr::Int(2)));
    assert_eq!(eval_expr(&neg, &Env::default(), None), Ok(-4));
}

#[test]
fn fig7_select_then_update() {
    let (s, p) = raise();
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("raise", &[])],
        schedule: vec![step(0, 0), step(0, 1)],
        init: fig7_init(),
    };
    let h = run(&o, &p, &s).unwrap();
    let st = h.final_state();
    let sel: Vec<&Effect> = h.steps[0].effects.iter().map(|&i| &st.effects[i]).collect();
    assert_eq!(sel.len(), 7);
    assert_eq!(sel.iter().filter(|e| e.field == "age").count(), 3);
    assert_eq!(sel.iter().filter(|e| e.field == "alive").count(), 3);
    let sal: Vec<_> = sel.iter().filter(|e| e.field == "sal").collect();
    assert_eq!(sal.len(), 1);
    assert_eq!((sal[0].key.clone(), sal[0].value), (vec![1], Some(85)));
    let upd: Vec<&Effect> = h.steps[1].effects.iter().map(|&i| &st.effects[i]).collect();
    assert_eq!(upd.len(), 1);
    assert_eq!((upd[0].kind, upd[0].field.as_str(), upd[0].value), (EffectKind::Write, "sal", Some(86)));
}

#[test]
fn delete_where_false_reads_alive_only() {
    let (s, p) = load("TABLE t (id, f) PK (id)", "d() { DELETE WHERE FALSE }");
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("d", &[])],
        schedule: vec![step(0, 0)],
        init: vec![row("t", 1, &[("id", 1), ("f", 0)]), row("t", 2, &[("id", 2), ("f", 0)])],
    };
    let h = run(&o, &p, &s).unwrap();
    let st = h.final_state();
    let eff: Vec<&Effect> = h.steps[0].effects.iter().map(|&i| &st.effects[i]).collect();
    assert_eq!(eff.len(), 2);
    assert!(eff.iter().all(|e| e.kind == EffectKind::Read && e.field == ALIVE));
}

#[test]
fn insert_writes_every_field_and_extends_universe() {
    let (s, p) = load(
        "TABLE t (id, f) PK (id)",
        "ins(k) { INSERT VALUES (id = k, f = 7) }\nscan() { SELECT f AS v WHERE this.f > 0 }",
    );
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("scan", &[]), inst("ins", &[4])],
        schedule: vec![step(0, 0), step(1, 0)],
        init: vec![],
    };
    let h = run(&o, &p, &s).unwrap();
    let st = h.final_state();
    let ins: Vec<&Effect> = h.steps[1].effects.iter().map(|&i| &st.effects[i]).collect();
    let fields: Vec<&str> = ins.iter().map(|e| e.field.as_str()).collect();
    assert_eq!(fields, vec!["id", "f", "alive"]);
    // The earlier scan covers the key inserted later in the run.
    let scan: Vec<&Effect> = h.steps[0].effects.iter().map(|&i| &st.effects[i]).collect();
    assert!(scan.iter().any(|e| e.key == vec![4] && e.field == ALIVE && e.value == Some(0)));
}

#[test]
fn dirty_read_schedule_manifests() {
    let (s, p) = dirty();
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("twoWrites", &[1, 5, 1, 6]), inst("oneRead", &[1])],
        schedule: vec![step(0, 0), step(1, 0), step(1, 1), step(0, 1)],
        init: vec![row("kv", 1, &[("id", 1), ("x", 0), ("y", 0)])],
    };
    let h = run(&o, &p, &s).unwrap();
    let st = h.final_state();
    let read = |k: usize| {
        h.steps[k].effects.iter().map(|&i| &st.effects[i]).find(|e| e.kind == EffectKind::Read).unwrap().value
    };
    assert_eq!(read(1), Some(5));
    assert_eq!(read(2), Some(0));
    assert!(check_history(&h, &Guarantee::SER).is_err());
}

#[test]
fn empty_body_history() {
    let (s, p) = load("TABLE t (id, f) PK (id)", "T() { SKIP }");
    let o = ExecutionOracle { partitions: 1, unroll: 2, instances: vec![inst("T", &[])], schedule: vec![], init: vec![] };
    let h = run(&o, &p, &s).unwrap();
    assert_eq!(h.states.len(), 1);
    assert!(h.steps.is_empty());
}

#[test]
fn fig8_reads_before_writes() {
    let (s, p) = inc();
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("inc", &[1]), inst("inc", &[1])],
        schedule: vec![step(0, 0), step(1, 0), step(0, 1), step(1, 1)],
        init: vec![row("acc", 1, &[("id", 1), ("bal", 0)])],
    };
    let h = run(&o, &p, &s).unwrap();
    let st = h.final_state();
    let writes: Vec<i64> =
        st.effects.iter().filter(|e| e.kind == EffectKind::Write && e.query.is_some()).map(|e| e.value.unwrap()).collect();
    assert_eq!(writes, vec![10, 10]);
    assert_eq!(local_view(st, 0..st.effects.len()).get("acc", &[1], "bal"), 10);
}

#[test]
fn schedule_mismatch_is_reported() {
    let (s, p) = dirty();
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("oneRead", &[1])],
        schedule: vec![step(0, 1), step(0, 0)],
        init: vec![],
    };
    match run(&o, &p, &s) {
        Err(SemanticsError::ScheduleMismatch { step, query, .. }) => {
            assert_eq!(step, 1);
            assert_eq!(query.to_string(), "Ins1-O2");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unscheduled_reachable_query_is_reported() {
    let (s, p) = dirty();
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("oneRead", &[1])],
        schedule: vec![step(0, 0)],
        init: vec![],
    };
    assert!(matches!(run(&o, &p, &s), Err(SemanticsError::Incomplete { instance: 0, site: 1 })));
}

#[test]
fn loop_bound_exceeded() {
    let (s, p) = raise();
    let mut init = fig7_init();
    init[2].values.insert("age".into(), 20);
    init.push(row("emp", 4, &[("id", 4), ("sal", 1), ("age", 1), ("alive", 1)]));
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("raise", &[])],
        schedule: vec![step(0, 0), step(0, 1), step(0, 2)],
        init,
    };
    assert!(matches!(run(&o, &p, &s), Err(SemanticsError::LoopBound { count: 3, .. })));
}

#[test]
fn any_constraint_checked() {
    let (s, p) = load("TABLE t (id, f) PK (id)", "w(k) { UPDATE SET f = any{_ > 3} WHERE this.id = k }");
    let mut i = inst("w", &[1]);
    i.abs.insert("abs_0".into(), 2);
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![i],
        schedule: vec![step(0, 0)],
        init: vec![row("t", 1, &[("id", 1), ("f", 0)])],
    };
    assert!(matches!(
        run(&o, &p, &s),
        Err(SemanticsError::Fault { fault: Fault::AnyViolated { .. }, .. })
    ));
}

#[test]
fn partition_isolation_hides_writes() {
    let (s, p) = dirty();
    let split = vec![vec![0], vec![1]];
    let o = ExecutionOracle {
        partitions: 2,
        unroll: 2,
        instances: vec![inst("twoWrites", &[1, 5, 1, 6]), inst("oneRead", &[1])],
        schedule: vec![
            ScheduleStep { instance: 0, site: 0, partition: 0, groups: split.clone() },
            ScheduleStep { instance: 0, site: 1, partition: 1, groups: vec![] },
            ScheduleStep { instance: 1, site: 0, partition: 1, groups: vec![] },
            ScheduleStep { instance: 1, site: 1, partition: 1, groups: vec![] },
        ],
        init: vec![row("kv", 1, &[("id", 1), ("x", 0), ("y", 0)])],
    };
    let h = run(&o, &p, &s).unwrap();
    let st = h.final_state();
    let reads: Vec<Option<i64>> = h.steps[2..]
        .iter()
        .map(|r| r.effects.iter().map(|&i| &st.effects[i]).find(|e| e.kind == EffectKind::Read).unwrap().value)
        .collect();
    assert_eq!(reads, vec![Some(0), Some(6)]);
    st.check_invariants().unwrap();
}

#[test]
fn unused_select_reads_are_marked() {
    let (s, p) = dirty();
    let o = ExecutionOracle {
        partitions: 1,
        unroll: 2,
        instances: vec![inst("oneRead", &[1])],
        schedule: vec![step(0, 0), step(0, 1)],
        init: vec![row("kv", 1, &[("id", 1), ("x", 0), ("y", 0)])],
    };
    let h = run(&o, &p, &s).unwrap();
    assert!(h.final_state().effects.iter().filter(|e| e.kind == EffectKind::Read).all(|e| !e.used));
    assert!(h.trace().contains(" rd+ "));
}

#[test]
fn serial_run_satisfies_ser() {
    let (s, p) = inc();
    let o = ExecutionOracle {
        partitions: 2,
        unroll: 2,
        instances: vec![inst("inc", &[1]), inst("inc", &[1])],
        schedule: vec![],
        init: vec![row("acc", 1, &[("id", 1), ("bal", 0)])],
    };
    let h = run_serial(&o, &[1, 0], &p, &s).unwrap();
    assert_eq!(h.steps.len(), 4);
    assert_eq!(h.steps[0].query.txn, 1);
    check_history(&h, &Guarantee::SER).unwrap();
    let st = h.final_state();
    assert_eq!(local_view(st, 0..st.effects.len()).get("acc", &[1], "bal"), 20);
}

/// Random interleavings of two dirty-read instances over random partitions.
fn arb_oracle() -> impl Strategy<Value = ExecutionOracle> {
    (
        proptest::collection::vec(any::<bool>(), 4),
        proptest::collection::vec(0usize..2, 4),
        proptest::collection::vec(any::<bool>(), 4),
        (0i64..3, 0i64..3, 0i64..3, 0i64..3),
    )
        .prop_map(|(order, parts, splits, (a, b, c, d))| {
            let mut next = [0usize, 0usize];
            let mut schedule = Vec::new();
            for pick in order {
                let mut i = pick as usize;
                if next[i] == 2 {
                    i = 1 - i;
                }
                schedule.push((i, next[i]));
                next[i] += 1;
            }
            let schedule = schedule
                .into_iter()
                .enumerate()
                .map(|(k, (i, site))| ScheduleStep {
                    instance: i,
                    site,
                    partition: parts[k],
                    groups: if splits[k] { vec![vec![0], vec![1]] } else { vec![] },
                })
                .collect();
            ExecutionOracle {
                partitions: 2,
                unroll: 2,
                instances: vec![inst("twoWrites", &[a, b, c, d]), inst("oneRead", &[a])],
                schedule,
                init: vec![
                    row("kv", 0, &[("id", 0), ("x", 0), ("y", 0)]),
                    row("kv", 1, &[("id", 1), ("x", 1), ("y", 1), ("alive", 1)]),
                ],
            }
        })
}

proptest! {
    #[test]
    fn states_grow_monotonically(o in arb_oracle()) {
        let (s, p) = dirty();
        let h = run(&o, &p, &s).unwrap();
        for w in h.states.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            b.check_invariants().unwrap();
            prop_assert!(a.effects.len() <= b.effects.len());
            prop_assert_eq!(&a.effects[..], &b.effects[..a.effects.len()]);
            prop_assert!(a.vis.is_subset(&b.vis));
            prop_assert_eq!(&a.ar[..], &b.ar[..a.ar.len()]);
            for p in 0..a.store.len() {
                prop_assert!(a.store[p].is_subset(&b.store[p]));
            }
        }
    }

    #[test]
    fn run_is_deterministic(o in arb_oracle()) {
        let (s, p) = dirty();
        let a = run(&o, &p, &s).unwrap();
        let b = run(&o, &p, &s).unwrap();
        prop_assert_eq!(a.trace(), b.trace());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn same_group_effects_are_visible(o in arb_oracle()) {
        let (s, p) = dirty();
        let h = run(&o, &p, &s).unwrap();
        let st = h.final_state();
        for (k, rec) in h.steps.iter().enumerate() {
            let groups = &o.schedule[k].groups;
            let group: Vec<usize> = if groups.is_empty() { vec![0, 1] } else {
                groups.iter().find(|g| g.contains(&rec.partition)).unwrap().clone()
            };
            for later in &h.steps[k + 1..] {
                if group.contains(&later.partition) {
                    for &a in &rec.effects {
                        for &b in &later.effects {
                            prop_assert!(st.visible(a, b));
                        }
                    }
                }
            }
        }
    }
}
