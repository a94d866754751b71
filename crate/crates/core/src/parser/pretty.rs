use crate::model::*;
use std::fmt::Write;

/// Renders a program in the concrete syntax accepted by `parse_program`.
pub fn pretty_print(prog: &Program) -> String {
    let mut out = String::new();
    for (i, t) in prog.transactions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{}({}) {{", t.name, t.params.join(", "));
        command(&t.body, 1, &mut out);
        out.push_str("}\n");
    }
    out
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn command(c: &Command, depth: usize, out: &mut String) {
    match c {
        Command::Seq(cs) => cs.iter().for_each(|c| command(c, depth, out)),
        Command::Skip => {
            indent(depth, out);
            out.push_str("SKIP;\n");
        }
        Command::Query(q) => {
            indent(depth, out);
            out.push_str(&pretty_query(q));
            out.push_str(";\n");
        }
        Command::If(g, body, _) => {
            indent(depth, out);
            let _ = writeln!(out, "IF ({}) {{", pretty_bool(g));
            command(body, depth + 1, out);
            indent(depth, out);
            out.push_str("}\n");
        }
        Command::Iterate(n, body, _) => {
            indent(depth, out);
            let _ = writeln!(out, "ITERATE ({}) {{", pretty_expr(n));
            command(body, depth + 1, out);
            indent(depth, out);
            out.push_str("}\n");
        }
    }
}

pub fn pretty_query(q: &Query) -> String {
    let body = match &q.kind {
        QueryKind::Select { field, var, cond } => {
            format!("SELECT {field} AS {var} WHERE {}", pretty_bool(cond))
        }
        QueryKind::SelectAgg { agg, field, var, cond } => {
            let a = match agg {
                Agg::Min => "MIN",
                Agg::Max => "MAX",
            };
            format!("SELECT {a}({field}) AS {var} WHERE {}", pretty_bool(cond))
        }
        QueryKind::Update { field, value, cond } => {
            format!("UPDATE SET {field} = {} WHERE {}", pretty_expr(value), pretty_bool(cond))
        }
        QueryKind::Insert { values } => {
            let vs: Vec<String> = values.iter().map(|(f, e)| format!("{f} = {}", pretty_expr(e))).collect();
            format!("INSERT VALUES ({})", vs.join(", "))
        }
        QueryKind::Delete { cond } => format!("DELETE WHERE {}", pretty_bool(cond)),
    };
    if q.table.is_empty() {
        body
    } else {
        format!("@{} {body}", q.table)
    }
}

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(..) => 2,
        _ => 3,
    }
}

pub fn pretty_expr(e: &Expr) -> String {
    match e {
        Expr::Int(n) => n.to_string(),
        Expr::Arg(a) => a.clone(),
        Expr::Bin(op, l, r) => {
            let p = expr_prec(e);
            let ls = wrap(pretty_expr(l), expr_prec(l) < p);
            let rs = wrap(pretty_expr(r), expr_prec(r) <= p);
            format!("{ls} {} {rs}", op.symbol())
        }
        Expr::Any { constraint, .. } => format!("any{{{}}}", pretty_bool(constraint)),
        Expr::Hole => "_".into(),
        Expr::Iter => "iter".into(),
        Expr::Size(v) => format!("size({v})"),
        Expr::Proj(f, v, i) => format!("proj({f}, {v}, {})", pretty_expr(i)),
        Expr::This(f) => format!("this.{f}"),
    }
}

fn bool_prec(b: &BoolExpr) -> u8 {
    match b {
        BoolExpr::Or(..) => 1,
        BoolExpr::And(..) => 2,
        _ => 3,
    }
}

pub fn pretty_bool(b: &BoolExpr) -> String {
    match b {
        BoolExpr::True => "TRUE".into(),
        BoolExpr::False => "FALSE".into(),
        BoolExpr::Cmp(l, op, r) => format!("{} {} {}", pretty_expr(l), op.symbol(), pretty_expr(r)),
        BoolExpr::Not(x) => format!("NOT {}", wrap(pretty_bool(x), bool_prec(x) < 3)),
        BoolExpr::And(l, r) | BoolExpr::Or(l, r) => {
            let p = bool_prec(b);
            let kw = if p == 1 { "OR" } else { "AND" };
            let ls = wrap(pretty_bool(l), bool_prec(l) < p);
            let rs = wrap(pretty_bool(r), bool_prec(r) <= p);
            format!("{ls} {kw} {rs}")
        }
    }
}

fn wrap(s: String, paren: bool) -> String {
    if paren {
        format!("({s})")
    } else {
        s
    }
}
