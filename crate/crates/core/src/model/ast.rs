use serde::{Deserialize, Serialize};
use std::fmt;

/// Reserved per-record liveness field, present in every table.
pub const ALIVE: &str = "alive";

/// Source location. Spans never participate in AST equality.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub fields: Vec<String>,
    pub primary_key: Vec<String>,
}

impl TableDef {
    pub fn has_field(&self, f: &str) -> bool {
        f == ALIVE || self.fields.iter().any(|x| x == f)
    }

    pub fn is_pk(&self, f: &str) -> bool {
        self.primary_key.iter().any(|x| x == f)
    }

    /// Declared fields followed by `alive`.
    pub fn all_fields(&self) -> Vec<String> {
        let mut v = self.fields.clone();
        v.push(ALIVE.to_string());
        v
    }

    pub fn field_index(&self, f: &str) -> Option<usize> {
        if f == ALIVE {
            return Some(self.fields.len());
        }
        self.fields.iter().position(|x| x == f)
    }

    pub fn pk_indices(&self) -> Vec<usize> {
        self.primary_key
            .iter()
            .map(|k| self.fields.iter().position(|f| f == k).expect("pk field declared"))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<TableDef>,
}

impl Schema {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    Arg(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// `any{φ}`; `id` numbers occurrences within a transaction (`abs_<id>`).
    Any { id: usize, constraint: Box<BoolExpr> },
    /// The value being chosen, only meaningful inside an `any{}` constraint.
    Hole,
    Iter,
    Size(String),
    Proj(String, String, Box<Expr>),
    This(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoolExpr {
    True,
    False,
    Cmp(Expr, CmpOp, Expr),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn and(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        match (a, b) {
            (BoolExpr::True, x) | (x, BoolExpr::True) => x,
            (a, b) => BoolExpr::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn conj(items: impl IntoIterator<Item = BoolExpr>) -> BoolExpr {
        items.into_iter().fold(BoolExpr::True, BoolExpr::and)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Agg {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryKind {
    Select { field: String, var: String, cond: BoolExpr },
    SelectAgg { agg: Agg, field: String, var: String, cond: BoolExpr },
    Update { field: String, value: Expr, cond: BoolExpr },
    Insert { values: Vec<(String, Expr)> },
    Delete { cond: BoolExpr },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub table: String,
    pub kind: QueryKind,
    pub span: Span,
}

impl Query {
    pub fn cond(&self) -> Option<&BoolExpr> {
        match &self.kind {
            QueryKind::Select { cond, .. }
            | QueryKind::SelectAgg { cond, .. }
            | QueryKind::Update { cond, .. }
            | QueryKind::Delete { cond } => Some(cond),
            QueryKind::Insert { .. } => None,
        }
    }

    pub fn bound_var(&self) -> Option<&str> {
        match &self.kind {
            QueryKind::Select { var, .. } | QueryKind::SelectAgg { var, .. } => Some(var),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            QueryKind::Select { .. } | QueryKind::SelectAgg { .. } => "select",
            QueryKind::Update { .. } => "update",
            QueryKind::Insert { .. } => "insert",
            QueryKind::Delete { .. } => "delete",
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(
            self.kind,
            QueryKind::Update { .. } | QueryKind::Insert { .. } | QueryKind::Delete { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    Query(Query),
    If(BoolExpr, Box<Command>, Span),
    Iterate(Expr, Box<Command>, Span),
    /// Two or more commands in order; never directly nested.
    Seq(Vec<Command>),
    Skip,
}

impl Command {
    pub fn seq(mut cmds: Vec<Command>) -> Command {
        let mut flat = Vec::new();
        for c in cmds.drain(..) {
            match c {
                Command::Seq(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Command::Skip,
            1 => flat.pop().unwrap(),
            _ => Command::Seq(flat),
        }
    }

    /// Queries in source order.
    pub fn queries(&self) -> Vec<&Query> {
        let mut out = Vec::new();
        self.collect_queries(&mut out);
        out
    }

    fn collect_queries<'a>(&'a self, out: &mut Vec<&'a Query>) {
        match self {
            Command::Query(q) => out.push(q),
            Command::If(_, c, _) | Command::Iterate(_, c, _) => c.collect_queries(out),
            Command::Seq(cs) => cs.iter().for_each(|c| c.collect_queries(out)),
            Command::Skip => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub name: String,
    pub params: Vec<String>,
    pub body: Command,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub transactions: Vec<Transaction>,
}

impl Program {
    pub fn txn(&self, name: &str) -> Option<&Transaction> {
        self.transactions.iter().find(|t| t.name == name)
    }

    pub fn txn_index(&self, name: &str) -> Option<usize> {
        self.transactions.iter().position(|t| t.name == name)
    }
}

/// Fields named by `this.f` in a WHERE clause, plus `alive`.
pub fn where_fields(cond: &BoolExpr) -> std::collections::BTreeSet<String> {
    let mut out = std::collections::BTreeSet::new();
    out.insert(ALIVE.to_string());
    visit_bool(cond, &mut |e| {
        if let Expr::This(f) = e {
            out.insert(f.clone());
        }
    });
    out
}

/// Calls `f` on every expression node reachable from `b`, including those
/// nested inside `any{}` constraints and projection indices.
pub fn visit_bool(b: &BoolExpr, f: &mut dyn FnMut(&Expr)) {
    match b {
        BoolExpr::True | BoolExpr::False => {}
        BoolExpr::Cmp(l, _, r) => {
            visit_expr(l, f);
            visit_expr(r, f);
        }
        BoolExpr::Not(x) => visit_bool(x, f),
        BoolExpr::And(l, r) | BoolExpr::Or(l, r) => {
            visit_bool(l, f);
            visit_bool(r, f);
        }
    }
}

pub fn visit_expr(e: &Expr, f: &mut dyn FnMut(&Expr)) {
    f(e);
    match e {
        Expr::Bin(_, l, r) => {
            visit_expr(l, f);
            visit_expr(r, f);
        }
        Expr::Any { constraint, .. } => visit_bool(constraint, f),
        Expr::Proj(_, _, i) => visit_expr(i, f),
        _ => {}
    }
}

/// Expressions appearing directly in a query (WHERE, SET value, VALUES).
pub fn visit_query(q: &Query, f: &mut dyn FnMut(&Expr)) {
    match &q.kind {
        QueryKind::Select { cond, .. } | QueryKind::SelectAgg { cond, .. } | QueryKind::Delete { cond } => {
            visit_bool(cond, f)
        }
        QueryKind::Update { value, cond, .. } => {
            visit_expr(value, f);
            visit_bool(cond, f);
        }
        QueryKind::Insert { values } => values.iter().for_each(|(_, e)| visit_expr(e, f)),
    }
}

/// Variables consumed through `size`/`proj` in an expression tree.
pub fn vars_in_bool(b: &BoolExpr) -> Vec<String> {
    let mut out = Vec::new();
    visit_bool(b, &mut |e| push_var(e, &mut out));
    out
}

pub fn vars_in_expr(e: &Expr) -> Vec<String> {
    let mut out = Vec::new();
    visit_expr(e, &mut |x| push_var(x, &mut out));
    out
}

pub fn vars_in_query(q: &Query) -> Vec<String> {
    let mut out = Vec::new();
    visit_query(q, &mut |x| push_var(x, &mut out));
    out
}

fn push_var(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Size(v) | Expr::Proj(_, v, _) => {
            if !out.contains(v) {
                out.push(v.clone())
            }
        }
        _ => {}
    }
}

/// True when the WHERE clause is a conjunction of equalities that pins every
/// primary-key field to an expression free of `this`. Such lookups touch a
/// single record and create no scan reads.
pub fn is_pk_lookup(table: &TableDef, cond: &BoolExpr) -> bool {
    let mut eqs = Vec::new();
    if !collect_pk_eqs(cond, &mut eqs) {
        return false;
    }
    table.primary_key.iter().all(|k| eqs.iter().any(|(f, _)| f == k))
        && eqs.iter().all(|(f, _)| table.is_pk(f))
}

/// Pairs (pk field, key expression) of a lookup clause.
pub fn pk_lookup_terms(cond: &BoolExpr) -> Vec<(String, Expr)> {
    let mut eqs = Vec::new();
    collect_pk_eqs(cond, &mut eqs);
    eqs
}

fn collect_pk_eqs(cond: &BoolExpr, out: &mut Vec<(String, Expr)>) -> bool {
    match cond {
        BoolExpr::And(l, r) => collect_pk_eqs(l, out) && collect_pk_eqs(r, out),
        BoolExpr::Cmp(l, CmpOp::Eq, r) => match (l, r) {
            (Expr::This(f), e) | (e, Expr::This(f)) if !mentions_this(e) => {
                out.push((f.clone(), e.clone()));
                true
            }
            _ => false,
        },
        _ => false,
    }
}

pub fn mentions_this(e: &Expr) -> bool {
    let mut found = false;
    visit_expr(e, &mut |x| {
        if matches!(x, Expr::This(_)) {
            found = true
        }
    });
    found
}
