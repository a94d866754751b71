use super::*;
use proptest::prelude::*;

fn emp() -> Schema {
    parse_schema("TABLE emp (id, sal, age) PK (id)").unwrap()
}

const FIG12: &str = "raise() {
  SELECT sal AS v WHERE this.age < 35;
  ITERATE (size(v)) { UPDATE SET sal = proj(sal, v, iter) + 1 WHERE this.id = proj(id, v, iter) }
}";

#[test]
fn schema_single_table() {
    let s = parse_schema("TABLE cust (c_id, c_pay_cnt) PK (c_id)").unwrap();
    assert_eq!(s.tables.len(), 1);
    assert_eq!(s.tables[0].fields, vec!["c_id", "c_pay_cnt"]);
    assert_eq!(s.tables[0].primary_key, vec!["c_id"]);
}

#[test]
fn schema_empty_and_comments() {
    assert!(parse_schema("").unwrap().tables.is_empty());
    assert!(parse_schema("# nothing here\n").unwrap().tables.is_empty());
}

#[test]
fn schema_errors() {
    assert!(parse_schema("TABLE t (a) PK (b)").is_err());
    assert!(parse_schema("TABLE t (a) PK ()").is_err());
    assert!(parse_schema("TABLE t (a, a) PK (a)").is_err());
    assert!(parse_schema("TABLE t (a) PK (a)\nTABLE t (b) PK (b)").is_err());
    assert!(parse_schema("TABLE t (a, alive) PK (a)").is_err());
}

#[test]
fn schema_error_span_inside_input() {
    let text = "TABLE t (a)\n  PK (b)";
    match parse_schema(text) {
        Err(ParseError::Syntax { span, .. }) => {
            assert_eq!(span.line, 2);
            assert!(span.column >= 1);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn fig12_program() {
    let p = parse_program(FIG12, &emp()).unwrap();
    assert_eq!(p.transactions.len(), 1);
    assert_eq!(p.transactions[0].body.queries().len(), 2);
    assert!(validate_program(&emp(), &p).is_empty());
}

#[test]
fn two_table_writes() {
    let s = parse_schema("TABLE t1 (id, f) PK (id)\nTABLE t2 (id, f) PK (id)").unwrap();
    let p = parse_program(
        "txnWrite(id, val) { @t1 UPDATE SET f = val WHERE this.id = id; UPDATE t2 SET f = val WHERE t2.id = id; }",
        &s,
    )
    .unwrap();
    let qs = p.transactions[0].body.queries();
    assert_eq!(qs.len(), 2);
    assert_eq!(qs[0].table, "t1");
    assert_eq!(qs[1].table, "t2");
}

#[test]
fn qualified_select_form() {
    let p = parse_program("t() { SELECT emp.sal AS v WHERE emp.age < 35 }", &emp()).unwrap();
    let q = p.transactions[0].body.queries()[0].clone();
    assert_eq!(q.table, "emp");
    assert_eq!(q.cond().unwrap(), &BoolExpr::Cmp(Expr::This("age".into()), CmpOp::Lt, Expr::Int(35)));
}

#[test]
fn skip_body() {
    let p = parse_program("T(){ SKIP }", &emp()).unwrap();
    assert_eq!(p.transactions[0].body, Command::Skip);
    assert!(pretty_print(&p).contains("SKIP"));
}

#[test]
fn keywords_case_insensitive() {
    let p = parse_program("t(k) { select sal as v where this.id = k and TRUE }", &emp()).unwrap();
    assert_eq!(p.transactions[0].body.queries().len(), 1);
}

#[test]
fn any_ids_in_textual_order() {
    let p = parse_program(
        "t() { UPDATE SET sal = any{_ > 0} + any{_ < any{_ = 1}} WHERE this.id = 1 }",
        &emp(),
    )
    .unwrap();
    let mut ids = Vec::new();
    visit_query(p.transactions[0].body.queries()[0], &mut |e| {
        if let Expr::Any { id, .. } = e {
            ids.push(*id)
        }
    });
    assert_eq!(ids, vec![0, 1, 2]);
}

#[test]
fn paren_boolean_backtracks() {
    let p = parse_program(
        "t(a) { IF ((a + 1) * 2 > 3 AND (a < 2 OR NOT a = 0)) { SKIP } }",
        &emp(),
    )
    .unwrap();
    match &p.transactions[0].body {
        Command::If(BoolExpr::And(l, r), _, _) => {
            assert!(matches!(**l, BoolExpr::Cmp(..)));
            assert!(matches!(**r, BoolExpr::Or(..)));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn validation_errors_surface() {
    match parse_program("t() { SELECT salx AS v WHERE TRUE }", &emp()) {
        Err(ParseError::Invalid(d)) => assert_eq!(d.len(), 1),
        Err(ParseError::Syntax { .. }) => {}
        Ok(_) => panic!("accepted an undeclared field"),
    }
    match parse_program("t() { INSERT VALUES (sal = 1, age = 2) }", &emp()) {
        Err(ParseError::Invalid(d)) => assert_eq!(d.len(), 1),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn syntax_error_has_span() {
    match parse_program("t() { SELECT sal AS WHERE TRUE }", &emp()) {
        Err(ParseError::Syntax { span, .. }) => assert_eq!((span.line, span.column), (1, 21)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn ambiguous_table_rejected() {
    let s = parse_schema("TABLE a (id, f) PK (id)\nTABLE b (id, f) PK (id)").unwrap();
    assert!(parse_program("t() { SELECT f AS v WHERE this.id = 1 }", &s).is_err());
}

#[test]
fn fig12_round_trip() {
    let p = parse_program(FIG12, &emp()).unwrap();
    let text = pretty_print(&p);
    assert_eq!(parse_program(&text, &emp()).unwrap(), p);
}

#[test]
fn precedence_preserved() {
    let s = emp();
    let p = parse_program("t(a, b) { UPDATE SET sal = a - (b - 1) * (a + 2) WHERE this.id = -3 }", &s).unwrap();
    let text = pretty_print(&p);
    assert!(text.contains("a - (b - 1) * (a + 2)"), "{text}");
    assert_eq!(parse_program(&text, &s).unwrap(), p);
}

include!("../../tests/support/arb_program.rs");

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip_random_programs(p in arb_program()) {
        let s = rt_schema();
        let diags = validate_program(&s, &p);
        prop_assert!(diags.is_empty(), "generator produced an invalid program: {:?}\n{}", diags, pretty_print(&p));
        let text = pretty_print(&p);
        let back = parse_program(&text, &s);
        prop_assert_eq!(back, Ok(p), "text:\n{}", text);
    }
}
