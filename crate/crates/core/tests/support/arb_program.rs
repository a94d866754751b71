// Random well-formed programs over a fixed two-table schema.

pub fn rt_schema() -> Schema {
    parse_schema("TABLE a (id, x, y) PK (id)\nTABLE b (k1, k2, z) PK (k1, k2)").unwrap()
}

#[derive(Clone, Debug)]
struct Ctx {
    params: Vec<String>,
    vars: Vec<(String, String, String)>,
    in_loop: bool,
}

fn leaf_expr(cx: &Ctx, this_fields: Option<Vec<String>>, hole: bool) -> BoxedStrategy<Expr> {
    let mut opts: Vec<BoxedStrategy<Expr>> = vec![(-50i64..50).prop_map(Expr::Int).boxed()];
    if !cx.params.is_empty() {
        opts.push(proptest::sample::select(cx.params.clone()).prop_map(Expr::Arg).boxed());
    }
    if cx.in_loop {
        opts.push(Just(Expr::Iter).boxed());
    }
    if hole {
        opts.push(Just(Expr::Hole).boxed());
    }
    if let Some(fs) = this_fields {
        opts.push(proptest::sample::select(fs).prop_map(Expr::This).boxed());
    }
    if !cx.vars.is_empty() {
        let vars = cx.vars.clone();
        opts.push(proptest::sample::select(vars.clone()).prop_map(|(v, _, _)| Expr::Size(v)).boxed());
        opts.push(
            (proptest::sample::select(vars), 1i64..3)
                .prop_map(|((v, f, _), i)| Expr::Proj(f, v, Box::new(Expr::Int(i))))
                .boxed(),
        );
    }
    proptest::strategy::Union::new(opts).boxed()
}

fn arb_expr(cx: &Ctx, this_fields: Option<Vec<String>>, hole: bool, depth: u32) -> BoxedStrategy<Expr> {
    let leaf = leaf_expr(cx, this_fields.clone(), hole);
    if depth == 0 {
        return leaf;
    }
    let sub = arb_expr(cx, this_fields, hole, depth - 1);
    let inner_any = {
        let c = Ctx { ..cx.clone() };
        arb_bool_e(&c, None, true, 0, depth - 1)
    };
    prop_oneof![
        3 => leaf,
        3 => (sub.clone(), prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)], sub)
            .prop_map(|(l, op, r)| Expr::Bin(op, Box::new(l), Box::new(r))),
        1 => inner_any.prop_map(|c| Expr::Any { id: 0, constraint: Box::new(c) }),
    ]
    .boxed()
}

fn arb_bool(cx: &Ctx, this_fields: Option<Vec<String>>, hole: bool, depth: u32) -> BoxedStrategy<BoolExpr> {
    arb_bool_e(cx, this_fields, hole, depth, 2)
}

fn arb_bool_e(cx: &Ctx, this_fields: Option<Vec<String>>, hole: bool, depth: u32, edepth: u32) -> BoxedStrategy<BoolExpr> {
    let e = arb_expr(cx, this_fields.clone(), hole, edepth);
    let cmp = (
        e.clone(),
        prop_oneof![Just(CmpOp::Lt), Just(CmpOp::Le), Just(CmpOp::Eq), Just(CmpOp::Gt), Just(CmpOp::Ge)],
        e,
    )
        .prop_map(|(l, op, r)| BoolExpr::Cmp(l, op, r));
    let leaf = prop_oneof![6 => cmp, 1 => Just(BoolExpr::True), 1 => Just(BoolExpr::False)].boxed();
    if depth == 0 {
        return leaf;
    }
    let sub = arb_bool_e(cx, this_fields, hole, depth - 1, edepth);
    prop_oneof![
        3 => leaf,
        1 => sub.clone().prop_map(|b| BoolExpr::Not(Box::new(b))),
        1 => (sub.clone(), sub.clone()).prop_map(|(l, r)| BoolExpr::And(Box::new(l), Box::new(r))),
        1 => (sub.clone(), sub).prop_map(|(l, r)| BoolExpr::Or(Box::new(l), Box::new(r))),
    ]
    .boxed()
}

fn table_of(t: &str) -> (Vec<String>, Vec<String>) {
    let s = rt_schema();
    let d = s.table(t).unwrap();
    (d.fields.clone(), d.primary_key.clone())
}

fn arb_query(cx: &Ctx, fresh: String) -> BoxedStrategy<Query> {
    let cx = cx.clone();
    proptest::sample::select(vec!["a".to_string(), "b".to_string()])
        .prop_flat_map(move |t| {
            let (fields, pk) = table_of(&t);
            let nonpk: Vec<String> = fields.iter().filter(|f| !pk.contains(f)).cloned().collect();
            let cond = arb_bool(&cx, Some(fields.clone()), false, 2);
            let val = arb_expr(&cx, None, false, 2);
            let fresh = fresh.clone();
            let t2 = t.clone();
            let kinds: Vec<BoxedStrategy<QueryKind>> = vec![
                (proptest::sample::select(fields.clone()), cond.clone())
                    .prop_map(move |(field, cond)| QueryKind::Select { field, var: fresh.clone(), cond })
                    .boxed(),
                (proptest::sample::select(nonpk), val.clone(), cond.clone())
                    .prop_map(|(field, value, cond)| QueryKind::Update { field, value, cond })
                    .boxed(),
                proptest::collection::vec(val, fields.len())
                    .prop_map(move |vs| QueryKind::Insert { values: fields.iter().cloned().zip(vs).collect() })
                    .boxed(),
                cond.prop_map(|cond| QueryKind::Delete { cond }).boxed(),
            ];
            proptest::strategy::Union::new(kinds)
                .prop_map(move |kind| Query { table: t2.clone(), kind, span: Span::default() })
        })
        .boxed()
}

fn cons(head: Command, rest: Command) -> Command {
    match rest {
        Command::Skip => head,
        rest => Command::seq(vec![head, rest]),
    }
}

/// Builds a body of `n` statements; SELECT bindings are threaded forward in
/// scope, and nested blocks get their own scope.
fn arb_body(cx: Ctx, n: usize, depth: u32, counter: usize) -> BoxedStrategy<(Command, usize)> {
    if n == 0 {
        return Just((Command::Skip, counter)).boxed();
    }
    let fresh = format!("v{counter}");
    let choice = if depth == 0 { 0..1u8 } else { 0..3u8 };
    choice
        .prop_flat_map(move |c| -> BoxedStrategy<(Command, usize)> {
            let cx = cx.clone();
            let fresh = fresh.clone();
            match c {
                0 => arb_query(&cx, fresh.clone())
                    .prop_flat_map(move |q| {
                        let mut next = cx.clone();
                        if let QueryKind::Select { field, var, .. } = &q.kind {
                            next.vars.push((var.clone(), field.clone(), q.table.clone()));
                        }
                        arb_body(next, n - 1, depth, counter + 1)
                            .prop_map(move |(rest, k)| (cons(Command::Query(q.clone()), rest), k))
                    })
                    .boxed(),
                1 => (arb_bool(&cx, None, false, 1), arb_body(cx.clone(), 2, depth - 1, counter + 1))
                    .prop_flat_map(move |(g, (inner, k))| {
                        arb_body(cx.clone(), n - 1, depth, k)
                            .prop_map(move |(rest, k2)| {
                                (cons(Command::If(g.clone(), Box::new(inner.clone()), Span::default()), rest), k2)
                            })
                    })
                    .boxed(),
                _ => {
                    let looped = Ctx { in_loop: true, ..cx.clone() };
                    (arb_expr(&cx, None, false, 1), arb_body(looped, 2, depth - 1, counter + 1))
                        .prop_flat_map(move |(e, (inner, k))| {
                            arb_body(cx.clone(), n - 1, depth, k).prop_map(move |(rest, k2)| {
                                (cons(Command::Iterate(e.clone(), Box::new(inner.clone()), Span::default()), rest), k2)
                            })
                        })
                        .boxed()
                }
            }
        })
        .boxed()
}

pub fn arb_program() -> impl Strategy<Value = Program> {
    proptest::collection::vec((0usize..3, 1usize..4), 1..3).prop_flat_map(|shapes| {
        let txns: Vec<BoxedStrategy<Transaction>> = shapes
            .into_iter()
            .enumerate()
            .map(|(i, (np, n))| {
                let params: Vec<String> = (0..np).map(|k| format!("p{k}")).collect();
                let cx = Ctx { params: params.clone(), vars: vec![], in_loop: false };
                arb_body(cx, n, 2, 0)
                    .prop_map(move |(body, _)| {
                        let mut body = body;
                        renumber_any(&mut body);
                        Transaction { name: format!("txn{i}"), params: params.clone(), body, span: Span::default() }
                    })
                    .boxed()
            })
            .collect();
        txns.prop_map(|transactions| Program { transactions })
    })
}

/// Assigns `any{}` ids in textual pre-order, as the parser does.
fn renumber_any(c: &mut Command) {
    let mut next = 0;
    renumber_cmd(c, &mut next);
}

fn renumber_cmd(c: &mut Command, next: &mut usize) {
    match c {
        Command::Query(q) => match &mut q.kind {
            QueryKind::Select { cond, .. } | QueryKind::SelectAgg { cond, .. } | QueryKind::Delete { cond } => {
                renumber_bool(cond, next)
            }
            QueryKind::Update { value, cond, .. } => {
                renumber_expr(value, next);
                renumber_bool(cond, next);
            }
            QueryKind::Insert { values } => values.iter_mut().for_each(|(_, e)| renumber_expr(e, next)),
        },
        Command::If(g, b, _) => {
            renumber_bool(g, next);
            renumber_cmd(b, next);
        }
        Command::Iterate(e, b, _) => {
            renumber_expr(e, next);
            renumber_cmd(b, next);
        }
        Command::Seq(cs) => cs.iter_mut().for_each(|c| renumber_cmd(c, next)),
        Command::Skip => {}
    }
}

fn renumber_bool(b: &mut BoolExpr, next: &mut usize) {
    match b {
        BoolExpr::Cmp(l, _, r) => {
            renumber_expr(l, next);
            renumber_expr(r, next);
        }
        BoolExpr::Not(x) => renumber_bool(x, next),
        BoolExpr::And(l, r) | BoolExpr::Or(l, r) => {
            renumber_bool(l, next);
            renumber_bool(r, next);
        }
        _ => {}
    }
}

fn renumber_expr(e: &mut Expr, next: &mut usize) {
    match e {
        Expr::Bin(_, l, r) => {
            renumber_expr(l, next);
            renumber_expr(r, next);
        }
        Expr::Any { id, constraint } => {
            *id = *next;
            *next += 1;
            renumber_bool(constraint, next);
        }
        Expr::Proj(_, _, i) => renumber_expr(i, next),
        _ => {}
    }
}
