use super::*;
use crate::parser::{parse_program, parse_program_unchecked, parse_schema};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn emp() -> Schema {
    parse_schema("TABLE emp (id, sal, age) PK (id)").unwrap()
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn lt(f: &str, n: i64) -> BoolExpr {
    BoolExpr::Cmp(Expr::This(f.into()), CmpOp::Lt, Expr::Int(n))
}

#[test]
fn where_fields_examples() {
    assert_eq!(where_fields(&lt("age", 35)), set(&["age", "alive"]));
    assert_eq!(where_fields(&BoolExpr::True), set(&["alive"]));
    let c = BoolExpr::Cmp(
        Expr::This("id".into()),
        CmpOp::Eq,
        Expr::Proj("id".into(), "v".into(), Box::new(Expr::Iter)),
    );
    assert_eq!(where_fields(&c), set(&["id", "alive"]));
}

proptest! {
    #[test]
    fn where_fields_distributes_over_and(a in 0usize..3, b in 0usize..3, n in -5i64..5) {
        let fs = ["id", "sal", "age"];
        let l = lt(fs[a], n);
        let r = lt(fs[b], n);
        let both = BoolExpr::And(Box::new(l.clone()), Box::new(r.clone()));
        let mut u = where_fields(&l);
        u.extend(where_fields(&r));
        prop_assert_eq!(where_fields(&both), u);
    }
}

#[test]
fn validate_fig12_clean() {
    let p = parse_program(
        "raise() { SELECT sal AS v WHERE this.age < 35; ITERATE (size(v)) { UPDATE SET sal = proj(sal, v, iter) + 1 WHERE this.id = proj(id, v, iter) } }",
        &emp(),
    )
    .unwrap();
    assert!(validate_program(&emp(), &p).is_empty());
}

#[test]
fn validate_unknown_field() {
    let s = parse_schema("TABLE a (id, salx) PK (id)\nTABLE emp (id, sal, age) PK (id)").unwrap();
    let p = parse_program_unchecked("t() { @emp SELECT salx AS v WHERE this.id = 1 }", &s).unwrap();
    assert_eq!(validate_program(&s, &p).len(), 1);
}

#[test]
fn validate_insert_missing_pk() {
    let p = parse_program_unchecked("t() { INSERT VALUES (sal = 1, age = 2) }", &emp()).unwrap();
    let d = validate_program(&emp(), &p);
    assert_eq!(d.len(), 1, "{d:?}");
}

#[test]
fn validate_iter_outside_loop_and_scoping() {
    let p = parse_program_unchecked("t() { UPDATE SET sal = iter WHERE this.id = 1 }", &emp()).unwrap();
    assert_eq!(validate_program(&emp(), &p).len(), 1);
    let p = parse_program_unchecked(
        "t(a) { IF (a > 0) { SELECT sal AS v WHERE this.id = 1 }; UPDATE SET sal = size(v) WHERE this.id = 2 }",
        &emp(),
    )
    .unwrap();
    assert_eq!(validate_program(&emp(), &p).len(), 1);
}

#[test]
fn validate_rejects_pk_update_and_duplicate_txn() {
    let p = parse_program_unchecked("t() { UPDATE SET id = 3 WHERE this.id = 1 }\nt() { SKIP }", &emp()).unwrap();
    assert_eq!(validate_program(&emp(), &p).len(), 2);
}

fn guard(n: &str, v: i64) -> BoolExpr {
    BoolExpr::Cmp(Expr::Arg(n.into()), CmpOp::Gt, Expr::Int(v))
}

#[test]
fn reachability_examples() {
    let p = parse_program(
        "t(a, b) { UPDATE SET sal = 1 WHERE this.id = 1; IF (a > 0) { IF (b = 1) { UPDATE SET sal = 2 WHERE this.id = 1 } } }",
        &emp(),
    )
    .unwrap();
    assert_eq!(reachability_condition(&p, "t", 0, 2).unwrap(), BoolExpr::True);
    let inner = reachability_condition(&p, "t", 1, 2).unwrap();
    let b1 = BoolExpr::Cmp(Expr::Arg("b".into()), CmpOp::Eq, Expr::Int(1));
    assert_eq!(inner, BoolExpr::And(Box::new(guard("a", 0)), Box::new(b1)));
    assert!(reachability_condition(&p, "t", 2, 2).is_err());
    assert!(reachability_condition(&p, "nope", 0, 2).is_err());
}

#[test]
fn reachability_inside_loop_instantiates_iter() {
    let p = parse_program(
        "t(n) { ITERATE (n) { UPDATE SET sal = iter WHERE this.id = iter } }",
        &emp(),
    )
    .unwrap();
    let u = unroll(&p.transactions[0], 2);
    assert_eq!(u.sites.len(), 2);
    assert_eq!(u.sites[0].copies, vec![1]);
    assert_eq!(
        u.reachability(0),
        BoolExpr::Cmp(Expr::Int(1), CmpOp::Le, Expr::Arg("n".into()))
    );
    match &u.sites[1].query.kind {
        QueryKind::Update { value, .. } => assert_eq!(value, &Expr::Int(2)),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(u.sites[0].ordinal, u.sites[1].ordinal);
}

proptest! {
    #[test]
    fn reachability_nesting_adds_one_guard(depth in 0usize..5) {
        let mut body = "UPDATE SET sal = 1 WHERE this.id = 1".to_string();
        for i in 0..depth {
            body = format!("IF (a > {i}) {{ {body} }}");
        }
        let p = parse_program(&format!("t(a) {{ {body} }}"), &emp()).unwrap();
        let u = unroll(&p.transactions[0], 2);
        prop_assert_eq!(u.sites[0].guards.len(), depth);
    }
}

#[test]
fn dataflow_and_st_plus() {
    let p = parse_program(
        "t(k) { SELECT sal AS v WHERE this.id = k; UPDATE SET sal = 5 WHERE this.id = k; UPDATE SET age = proj(sal, v, 1) WHERE this.id = k }",
        &emp(),
    )
    .unwrap();
    let u = unroll(&p.transactions[0], 2);
    let sp = u.st_plus();
    assert!(!sp[0][1]);
    assert!(sp[0][2] && sp[2][0]);
    assert!(!sp[1][2]);
    assert!(u.site_used(0));
    assert!(u.site_used(1));
}

#[test]
fn pk_lookup_detection() {
    let t = &emp().tables[0];
    let eq = BoolExpr::Cmp(Expr::This("id".into()), CmpOp::Eq, Expr::Arg("k".into()));
    assert!(is_pk_lookup(t, &eq));
    assert!(!is_pk_lookup(t, &lt("age", 3)));
    let both = BoolExpr::And(Box::new(eq.clone()), Box::new(lt("age", 3)));
    assert!(!is_pk_lookup(t, &both));
}

#[test]
fn state_invariants_detect_bad_vis() {
    let mut s = SystemState::new(1);
    for i in 0..2 {
        s.effects.push(Effect {
            id: EffectId { step: i, ord: 0 },
            kind: EffectKind::Write,
            table: "emp".into(),
            key: vec![1],
            field: "sal".into(),
            value: Some(i as i64),
            used: true,
            query: None,
            txn: None,
            partition: 0,
        });
        s.ar.push(i as u64);
        s.store[0].insert(i);
        s.delivered[0].insert(i);
    }
    assert!(s.check_invariants().is_ok());
    s.vis.insert((1, 0));
    assert!(s.check_invariants().is_err());
}
