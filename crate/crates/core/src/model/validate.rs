use super::ast::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

/// Checks a program against its schema; one diagnostic per violation.
pub fn validate_program(schema: &Schema, prog: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut names = BTreeSet::new();
    for t in &prog.transactions {
        if !names.insert(t.name.as_str()) {
            out.push(diag(t.span, format!("duplicate transaction `{}`", t.name)));
        }
        let mut params = BTreeSet::new();
        for p in &t.params {
            if !params.insert(p.as_str()) {
                out.push(diag(t.span, format!("duplicate parameter `{p}` in `{}`", t.name)));
            }
        }
        let mut cx = Ctx { schema, params: &t.params, bound: BTreeSet::new(), out: &mut out };
        cx.command(&t.body, &mut BTreeMap::new(), false, t.span);
    }
    out
}

fn diag(span: Span, message: String) -> Diagnostic {
    Diagnostic { span, message }
}

struct Ctx<'a> {
    schema: &'a Schema,
    params: &'a [String],
    /// Every variable name bound anywhere so far (names are single-use).
    bound: BTreeSet<String>,
    out: &'a mut Vec<Diagnostic>,
}

/// Variable name → (table, selected field) for variables in scope.
type Scope = BTreeMap<String, (String, String)>;

#[derive(Clone, Copy, PartialEq)]
enum Place {
    Guard,
    Where,
    Value,
}

impl Ctx<'_> {
    fn command(&mut self, c: &Command, scope: &mut Scope, in_loop: bool, span: Span) {
        match c {
            Command::Skip => {}
            Command::Query(q) => self.query(q, scope, in_loop),
            Command::If(g, body, sp) => {
                self.boolean(g, scope, in_loop, Place::Guard, None, *sp);
                let mut inner = scope.clone();
                self.command(body, &mut inner, in_loop, *sp);
            }
            Command::Iterate(n, body, sp) => {
                self.expr(n, scope, in_loop, Place::Guard, None, false, *sp);
                let mut inner = scope.clone();
                self.command(body, &mut inner, true, *sp);
            }
            Command::Seq(cs) => cs.iter().for_each(|c| self.command(c, scope, in_loop, span)),
        }
    }

    fn query(&mut self, q: &Query, scope: &mut Scope, in_loop: bool) {
        let sp = q.span;
        let Some(table) = self.schema.table(&q.table) else {
            self.out.push(diag(sp, format!("unknown table `{}`", q.table)));
            return;
        };
        let field_ok = |cx: &mut Self, f: &str| {
            if f == ALIVE || !table.has_field(f) {
                cx.out.push(diag(sp, format!("unknown field `{f}` in table `{}`", table.name)));
                false
            } else {
                true
            }
        };
        match &q.kind {
            QueryKind::Select { field, var, cond } | QueryKind::SelectAgg { field, var, cond, .. } => {
                field_ok(self, field);
                self.boolean(cond, scope, in_loop, Place::Where, Some(table), sp);
                if !self.bound.insert(var.clone()) || self.params.contains(var) {
                    self.out.push(diag(sp, format!("variable `{var}` is bound twice")));
                }
                scope.insert(var.clone(), (table.name.clone(), field.clone()));
            }
            QueryKind::Update { field, value, cond } => {
                if field_ok(self, field) && table.is_pk(field) {
                    self.out.push(diag(sp, format!("primary-key field `{field}` cannot be updated")));
                }
                self.expr(value, scope, in_loop, Place::Value, None, false, sp);
                self.boolean(cond, scope, in_loop, Place::Where, Some(table), sp);
            }
            QueryKind::Delete { cond } => self.boolean(cond, scope, in_loop, Place::Where, Some(table), sp),
            QueryKind::Insert { values } => {
                let mut seen = BTreeSet::new();
                for (f, e) in values {
                    if field_ok(self, f) && !seen.insert(f.as_str()) {
                        self.out.push(diag(sp, format!("field `{f}` assigned twice")));
                    }
                    self.expr(e, scope, in_loop, Place::Value, None, false, sp);
                }
                for f in &table.fields {
                    if !seen.contains(f.as_str()) {
                        let what = if table.is_pk(f) { "primary-key field" } else { "field" };
                        self.out.push(diag(sp, format!("insert into `{}` is missing {what} `{f}`", table.name)));
                    }
                }
            }
        }
    }

    fn boolean(&mut self, b: &BoolExpr, scope: &Scope, in_loop: bool, place: Place, table: Option<&TableDef>, sp: Span) {
        self.boolean_in(b, scope, in_loop, place, table, false, sp)
    }

    #[allow(clippy::too_many_arguments)]
    fn boolean_in(
        &mut self,
        b: &BoolExpr,
        scope: &Scope,
        in_loop: bool,
        place: Place,
        table: Option<&TableDef>,
        in_any: bool,
        sp: Span,
    ) {
        match b {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::Cmp(l, _, r) => {
                self.expr(l, scope, in_loop, place, table, in_any, sp);
                self.expr(r, scope, in_loop, place, table, in_any, sp);
            }
            BoolExpr::Not(x) => self.boolean_in(x, scope, in_loop, place, table, in_any, sp),
            BoolExpr::And(l, r) | BoolExpr::Or(l, r) => {
                self.boolean_in(l, scope, in_loop, place, table, in_any, sp);
                self.boolean_in(r, scope, in_loop, place, table, in_any, sp);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn expr(
        &mut self,
        e: &Expr,
        scope: &Scope,
        in_loop: bool,
        place: Place,
        table: Option<&TableDef>,
        in_any: bool,
        sp: Span,
    ) {
        match e {
            Expr::Int(_) => {}
            Expr::Arg(a) => {
                if !self.params.contains(a) {
                    self.out.push(diag(sp, format!("unknown argument `{a}`")));
                }
            }
            Expr::Bin(_, l, r) => {
                self.expr(l, scope, in_loop, place, table, in_any, sp);
                self.expr(r, scope, in_loop, place, table, in_any, sp);
            }
            Expr::Any { constraint, .. } => {
                self.boolean_in(constraint, scope, in_loop, Place::Value, None, true, sp);
            }
            Expr::Hole => {
                if !in_any {
                    self.out.push(diag(sp, "`_` outside of an any{} constraint".into()));
                }
            }
            Expr::Iter => {
                if !in_loop {
                    self.out.push(diag(sp, "`iter` outside of an iterate body".into()));
                }
            }
            Expr::Size(v) => self.var(v, None, scope, sp),
            Expr::Proj(f, v, i) => {
                self.var(v, Some(f), scope, sp);
                self.expr(i, scope, in_loop, place, table, in_any, sp);
            }
            Expr::This(f) => match (place, table) {
                (Place::Where, Some(t)) if !in_any => {
                    if f == ALIVE || !t.has_field(f) {
                        self.out.push(diag(sp, format!("unknown field `{f}` in table `{}`", t.name)));
                    }
                }
                _ => self.out.push(diag(sp, format!("`this.{f}` outside of a WHERE clause"))),
            },
        }
    }

    fn var(&mut self, v: &str, field: Option<&String>, scope: &Scope, sp: Span) {
        match scope.get(v) {
            None => self.out.push(diag(sp, format!("variable `{v}` is not bound by an earlier SELECT in scope"))),
            Some((table, selected)) => {
                if let Some(f) = field {
                    let t = self.schema.table(table).expect("bound var table exists");
                    if f != selected && !t.is_pk(f) {
                        self.out.push(diag(
                            sp,
                            format!("`proj({f},{v},..)` reads a field that the SELECT binding `{v}` did not fetch"),
                        ));
                    }
                }
            }
        }
    }
}
