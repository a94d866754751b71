//! Grounded SMT encoding of bounded anomalous executions.
//!
//! A problem instantiates `serial + txns` transaction slots. Each slot picks
//! one transaction type; every (slot, type, unrolled site) triple is a node
//! whose execution, timestamp, partition and replication set are solver
//! variables. Records come from a fixed per-table budget. The database state
//! observed by every node is defined exactly from visibility and
//! arbitration, so each model describes one concrete execution of the
//! simulator. Dependencies are defined per (record, field) and the cycle
//! clauses pick `len` distinct nodes of the concurrent slots joined by
//! dependency and same-transaction edges.

mod decode;
pub mod sexpr;
pub mod smt;
pub mod solver;

pub use decode::{DecodeError, DecodedInstance, DecodedModel, DecodedStep};

use crate::consistency::Guarantee;
use crate::depgraph::{DepKind, SigItem};
use crate::model::*;
use serde::{Deserialize, Serialize};
use smt::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Magnitude bound on arguments, abstract values, keys and initial values.
pub const VALUE_BOUND: i64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub unroll: usize,
    /// Records per table.
    pub records: usize,
    pub partitions: usize,
    pub spec: Guarantee,
    pub internal_only: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { unroll: 2, records: 4, partitions: 2, spec: Guarantee::EC, internal_only: false }
    }
}

/// Serial prefix length, concurrent transactions and cycle length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub serial: usize,
    pub txns: usize,
    pub len: usize,
}

/// A constraint on the initial database.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// Every initially alive record of `table` satisfies `field op value`.
    Compare { table: String, field: String, op: CmpOp, value: i64 },
    /// `table` has no initially alive record.
    Empty(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse assumption `{0}` (expected `table.field OP int` or `table EMPTY`)")]
pub struct AssumptionSyntax(pub String);

impl FromStr for Assumption {
    type Err = AssumptionSyntax;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AssumptionSyntax(s.to_string());
        let t = s.trim();
        let words: Vec<&str> = t.split_whitespace().collect();
        if words.len() == 2 && words[1].eq_ignore_ascii_case("empty") {
            return Ok(Assumption::Empty(words[0].to_string()));
        }
        let (pos, op) = ["<=", ">=", "<", ">", "="]
            .iter()
            .find_map(|o| t.find(o).map(|p| (p, *o)))
            .ok_or_else(err)?;
        let lhs = t[..pos].trim();
        let rhs = t[pos + op.len()..].trim();
        let (table, field) = lhs.split_once('.').ok_or_else(err)?;
        let op = match op {
            "<=" => CmpOp::Le,
            ">=" => CmpOp::Ge,
            "<" => CmpOp::Lt,
            ">" => CmpOp::Gt,
            _ => CmpOp::Eq,
        };
        let value = rhs.parse().map_err(|_| err())?;
        if table.is_empty() || field.is_empty() {
            return Err(err());
        }
        Ok(Assumption::Compare { table: table.trim().to_string(), field: field.trim().to_string(), op, value })
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::Compare { table, field, op, value } => write!(f, "{table}.{field} {} {value}", op.symbol()),
            Assumption::Empty(t) => write!(f, "{t} EMPTY"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("transaction `{txn}` uses an aggregate SELECT, which the encoder does not support")]
    Aggregate { txn: String },
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("assumption names unknown table `{0}`")]
    UnknownTable(String),
    #[error("assumption names unknown field `{table}.{field}`")]
    UnknownField { table: String, field: String },
    #[error("transaction `{txn}`: {message}")]
    Unsupported { txn: String, message: String },
}

/// One (slot, transaction type, unrolled site) triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NodeInfo {
    pub slot: usize,
    pub txn: usize,
    pub site: usize,
}

/// Builds problems for one program.
pub struct Encoder<'a> {
    pub schema: &'a Schema,
    pub unrolled: Vec<UnrolledTxn>,
    pub config: EncoderConfig,
}

const DEP_KINDS: [DepKind; 3] = [DepKind::WR, DepKind::WW, DepKind::RW];
const EDGE_KINDS: [DepKind; 4] = [DepKind::WR, DepKind::WW, DepKind::RW, DepKind::ST];

fn kind_tag(k: DepKind) -> &'static str {
    match k {
        DepKind::WR => "WR",
        DepKind::WW => "WW",
        DepKind::RW => "RW",
        DepKind::ST | DepKind::STPlus => "ST",
    }
}

impl<'a> Encoder<'a> {
    pub fn new(prog: &Program, schema: &'a Schema, config: EncoderConfig) -> Result<Encoder<'a>, EncodeError> {
        let unrolled = unroll_program(prog, config.unroll);
        for u in &unrolled {
            for s in &u.sites {
                if matches!(s.query.kind, QueryKind::SelectAgg { .. }) {
                    return Err(EncodeError::Aggregate { txn: u.name.clone() });
                }
            }
        }
        Ok(Encoder { schema, unrolled, config })
    }

    /// The base problem for the given bounds. Assumptions constrain the
    /// initial database.
    pub fn encode(&self, bounds: Bounds, assumptions: &[Assumption]) -> Result<Problem, EncodeError> {
        if bounds.len < 3 {
            return Err(EncodeError::Bounds(format!("cycle length {} is below 3", bounds.len)));
        }
        if bounds.txns < 1 {
            return Err(EncodeError::Bounds("at least one concurrent transaction is required".into()));
        }
        if self.config.partitions == 0 {
            return Err(EncodeError::Bounds("at least one partition is required".into()));
        }
        for a in assumptions {
            let (table, field) = match a {
                Assumption::Compare { table, field, .. } => (table, Some(field)),
                Assumption::Empty(table) => (table, None),
            };
            let t = self.schema.table(table).ok_or_else(|| EncodeError::UnknownTable(table.clone()))?;
            if let Some(f) = field {
                if !t.has_field(f) {
                    return Err(EncodeError::UnknownField { table: table.clone(), field: f.clone() });
                }
            }
        }
        let mut b = Builder::new(self, bounds);
        b.build(assumptions)?;
        Ok(b.finish())
    }
}

/// An encoded problem plus the metadata needed to add constraints and
/// decode models.
#[derive(Clone, Debug)]
pub struct Problem {
    pub bounds: Bounds,
    pub text: String,
    pub nodes: Vec<NodeInfo>,
    pub txn_names: Vec<String>,
    pub params: Vec<Vec<String>>,
    pub abs_labels: Vec<Vec<String>>,
    pub tables: Vec<TableDef>,
    pub records: usize,
    pub partitions: usize,
    pub unroll: usize,
    /// (table, field index) pairs usable as edge witnesses.
    pub cells: Vec<(usize, usize)>,
    pub internal_only: bool,
    /// Static ST+ relation per transaction type.
    pub st_plus: Vec<Vec<Vec<bool>>>,
}

impl Problem {
    fn slots(&self) -> usize {
        self.bounds.serial + self.bounds.txns
    }

    fn is_cycle_slot(&self, s: usize) -> bool {
        s >= self.bounds.serial
    }

    fn cycle_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&n| self.is_cycle_slot(self.nodes[n].slot))
    }

    fn at(&self, m: usize, txn: &str, site: usize) -> String {
        or(self
            .cycle_nodes()
            .filter(|&n| self.txn_names[self.nodes[n].txn] == txn && self.nodes[n].site == site)
            .map(|n| format!("cyc_{m}_{n}")))
    }

    fn at_type(&self, m: usize, txn: &str) -> String {
        or(self
            .cycle_nodes()
            .filter(|&n| self.txn_names[self.nodes[n].txn] == txn)
            .map(|n| format!("cyc_{m}_{n}")))
    }

    fn field_is(&self, m: usize, field: &str) -> String {
        or(self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, (t, f))| self.tables[*t].all_fields()[*f] == field)
            .map(|(c, _)| format!("ef_{m}_{c}")))
    }

    fn position(&self, m: usize, item: &SigItem) -> String {
        let (txn, site, kind, field) = item;
        let mut parts = vec![self.at(m, txn, *site), format!("ek_{m}_{}", kind_tag(*kind))];
        if kind.is_dependency() {
            if let Some(f) = field {
                parts.push(self.field_is(m, f));
            }
        }
        and(parts)
    }

    /// The cycle `sig` occurs in some rotation.
    pub fn cycle_matches(&self, sig: &[SigItem]) -> String {
        if sig.len() != self.bounds.len {
            return FALSE.into();
        }
        let k = sig.len();
        or((0..k).map(|rot| and((0..k).map(|m| self.position(m, &sig[(m + rot) % k])))))
    }

    /// Assertion excluding the given cycles.
    pub fn block(&self, sigs: &[Vec<SigItem>]) -> String {
        and(sigs.iter().map(|s| not(self.cycle_matches(s))))
    }

    /// Assertion fixing transaction type and edge kind per position, up to
    /// rotation.
    pub fn pin_structure(&self, structure: &[(String, DepKind)]) -> String {
        if structure.len() != self.bounds.len {
            return FALSE.into();
        }
        let k = structure.len();
        or((0..k).map(|rot| {
            and((0..k).map(|m| {
                let (t, kind) = &structure[(m + rot) % k];
                and2(self.at_type(m, t), format!("ek_{m}_{}", kind_tag(*kind)))
            }))
        }))
    }

    pub fn dead_record(&self, table: usize, r: usize) -> String {
        not(format!("ialive_{table}_{r}"))
    }

    /// Every node runs at partition 0 and replicates everywhere.
    pub fn fully_connected(&self) -> String {
        and((0..self.nodes.len()).flat_map(|n| {
            std::iter::once(format!("(= tau_{n} 0)")).chain((0..self.partitions).map(move |p| format!("mem_{n}_{p}")))
        }))
    }

    /// Reached concurrent nodes run in (site, slot) order.
    pub fn round_robin(&self) -> String {
        let cyc: Vec<usize> = self.cycle_nodes().collect();
        let mut parts = Vec::new();
        for &a in &cyc {
            for &b in &cyc {
                let (na, nb) = (self.nodes[a], self.nodes[b]);
                if (na.site, na.slot) < (nb.site, nb.slot) {
                    parts.push(implies(
                        and2(format!("reach_{a}"), format!("reach_{b}")),
                        format!("(< ts_{a} ts_{b})"),
                    ));
                }
            }
        }
        and(parts)
    }

    /// Problem text with extra assertions appended.
    pub fn with(&self, extra: &[String]) -> String {
        let mut s = self.text.clone();
        for x in extra {
            if x != TRUE {
                s.push_str("(assert ");
                s.push_str(x);
                s.push_str(")\n");
            }
        }
        s
    }

    /// Constants read back from a model.
    pub fn model_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for s in 0..self.slots() {
            for (t, params) in self.params.iter().enumerate() {
                v.push(format!("ty_{s}_{t}"));
                for a in 0..params.len() {
                    v.push(format!("arg_{s}_{t}_{a}"));
                }
                for k in 0..self.abs_labels[t].len() {
                    v.push(format!("abs_{s}_{t}_{k}"));
                }
            }
        }
        for n in 0..self.nodes.len() {
            v.push(format!("reach_{n}"));
            v.push(format!("ts_{n}"));
            v.push(format!("tau_{n}"));
            for p in 0..self.partitions {
                v.push(format!("mem_{n}_{p}"));
            }
        }
        for (t, table) in self.tables.iter().enumerate() {
            for r in 0..self.records {
                v.push(format!("ialive_{t}_{r}"));
                for j in 0..table.primary_key.len() {
                    v.push(format!("key_{t}_{r}_{j}"));
                }
                for f in 0..table.fields.len() {
                    v.push(format!("init_{t}_{r}_{f}"));
                }
            }
        }
        for m in 0..self.bounds.len {
            for n in self.cycle_nodes() {
                v.push(format!("cyc_{m}_{n}"));
            }
            for k in EDGE_KINDS {
                v.push(format!("ek_{m}_{}", kind_tag(k)));
            }
            for c in 0..self.cells.len() {
                v.push(format!("ef_{m}_{c}"));
            }
            for r in 0..self.records {
                v.push(format!("ew_{m}_{r}"));
            }
        }
        v
    }
}

/// Expression context: the evaluating slot and type, the variable scope,
/// the record bound to `this` and the value of `_`.
#[derive(Clone)]
struct Cx<'c> {
    slot: usize,
    txn: usize,
    scope: &'c BTreeMap<String, usize>,
    this: Option<(usize, usize)>,
    hole: Option<String>,
}

struct Builder<'e, 'a> {
    enc: &'e Encoder<'a>,
    bounds: Bounds,
    s: Script,
    nodes: Vec<NodeInfo>,
    node_at: BTreeMap<(usize, usize, usize), usize>,
    /// Table index per node.
    table_of: Vec<usize>,
    /// Field indices a node may read / write on its table.
    reads: Vec<BTreeSet<usize>>,
    writes: Vec<BTreeSet<usize>>,
    writers: BTreeMap<(usize, usize), Vec<usize>>,
    cells: Vec<(usize, usize)>,
}

fn cmp_op(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Lt => "<",
        CmpOp::Le => "<=",
        CmpOp::Eq => "=",
        CmpOp::Gt => ">",
        CmpOp::Ge => ">=",
    }
}

impl<'e, 'a> Builder<'e, 'a> {
    fn new(enc: &'e Encoder<'a>, bounds: Bounds) -> Self {
        let slots = bounds.serial + bounds.txns;
        let mut nodes = Vec::new();
        let mut node_at = BTreeMap::new();
        let mut table_of = Vec::new();
        let mut reads = Vec::new();
        let mut writes = Vec::new();
        let mut writers: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for slot in 0..slots {
            for (t, u) in enc.unrolled.iter().enumerate() {
                for site in &u.sites {
                    let n = nodes.len();
                    nodes.push(NodeInfo { slot, txn: t, site: site.index });
                    node_at.insert((slot, t, site.index), n);
                    let q = &site.query;
                    let ti = enc.schema.table_index(&q.table).expect("validated table");
                    let table = &enc.schema.tables[ti];
                    let fi = |f: &str| table.field_index(f).expect("validated field");
                    let mut rd = BTreeSet::new();
                    let mut wr = BTreeSet::new();
                    if let Some(cond) = q.cond() {
                        if !is_pk_lookup(table, cond) {
                            rd.extend(where_fields(cond).iter().map(|f| fi(f)));
                        }
                    }
                    match &q.kind {
                        QueryKind::Select { field, .. } | QueryKind::SelectAgg { field, .. } => {
                            rd.insert(fi(field));
                        }
                        QueryKind::Update { field, .. } => {
                            wr.insert(fi(field));
                        }
                        QueryKind::Delete { .. } => {
                            wr.insert(fi(ALIVE));
                        }
                        QueryKind::Insert { .. } => wr.extend(0..=table.fields.len()),
                    }
                    for &f in &wr {
                        writers.entry((ti, f)).or_default().push(n);
                    }
                    table_of.push(ti);
                    reads.push(rd);
                    writes.push(wr);
                }
            }
        }
        let mut cells = Vec::new();
        for (t, table) in enc.schema.tables.iter().enumerate() {
            for f in 0..=table.fields.len() {
                cells.push((t, f));
            }
        }
        Builder {
            enc,
            bounds,
            s: Script::default(),
            nodes,
            node_at,
            table_of,
            reads,
            writes,
            writers,
            cells,
        }
    }

    fn finish(self) -> Problem {
        let enc = self.enc;
        Problem {
            bounds: self.bounds,
            text: self.s.text(),
            nodes: self.nodes,
            txn_names: enc.unrolled.iter().map(|u| u.name.clone()).collect(),
            params: enc.unrolled.iter().map(|u| u.params.clone()).collect(),
            abs_labels: enc.unrolled.iter().map(|u| u.abs.iter().map(|a| a.label()).collect()).collect(),
            tables: enc.schema.tables.clone(),
            records: enc.config.records,
            partitions: enc.config.partitions,
            unroll: enc.config.unroll,
            cells: self.cells,
            internal_only: enc.config.internal_only,
            st_plus: enc.unrolled.iter().map(|u| u.st_plus()).collect(),
        }
    }

    fn slots(&self) -> usize {
        self.bounds.serial + self.bounds.txns
    }

    fn is_cycle(&self, n: usize) -> bool {
        self.nodes[n].slot >= self.bounds.serial
    }

    fn site(&self, n: usize) -> &Site {
        let i = self.nodes[n];
        &self.enc.unrolled[i.txn].sites[i.site]
    }

    fn table(&self, t: usize) -> &TableDef {
        &self.enc.schema.tables[t]
    }

    fn records(&self) -> usize {
        self.enc.config.records
    }

    fn unsupported(&self, txn: usize, message: &str) -> EncodeError {
        EncodeError::Unsupported { txn: self.enc.unrolled[txn].name.clone(), message: message.into() }
    }

    fn bounded(&mut self, name: &str) {
        self.s.declare_int(name);
        self.s.assert(format!("(<= (- {VALUE_BOUND}) {name} {VALUE_BOUND})"));
    }

    fn var_site(&self, cx: &Cx, v: &str) -> Result<usize, EncodeError> {
        let site = *cx.scope.get(v).ok_or_else(|| self.unsupported(cx.txn, &format!("variable `{v}` is unbound")))?;
        Ok(self.node_at[&(cx.slot, cx.txn, site)])
    }

    fn size(&self, a: usize) -> String {
        sum((0..self.records()).map(|r| format!("(ite match_{a}_{r} 1 0)")))
    }

    fn expr(&self, e: &Expr, cx: &Cx) -> Result<String, EncodeError> {
        Ok(match e {
            Expr::Int(n) => int(*n),
            Expr::Arg(a) => {
                let i = self.enc.unrolled[cx.txn]
                    .params
                    .iter()
                    .position(|p| p == a)
                    .ok_or_else(|| self.unsupported(cx.txn, &format!("unknown argument `{a}`")))?;
                format!("arg_{}_{}_{i}", cx.slot, cx.txn)
            }
            Expr::Bin(op, l, r) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "div",
                };
                bin(sym, self.expr(l, cx)?, self.expr(r, cx)?)
            }
            Expr::Any { id, .. } => format!("abs_{}_{}_{id}", cx.slot, cx.txn),
            Expr::Hole => cx.hole.clone().ok_or_else(|| self.unsupported(cx.txn, "`_` outside any{}"))?,
            Expr::Iter => return Err(self.unsupported(cx.txn, "`iter` outside a loop")),
            Expr::Size(v) => self.size(self.var_site(cx, v)?),
            Expr::Proj(f, v, i) => {
                let a = self.var_site(cx, v)?;
                let table = self.table(self.table_of[a]);
                let fi = table
                    .field_index(f)
                    .ok_or_else(|| self.unsupported(cx.txn, &format!("unknown field `{f}` in proj")))?;
                let idx = self.expr(i, cx)?;
                let mut acc = "0".to_string();
                for r in (0..self.records()).rev() {
                    let before = sum((0..r).map(|q| format!("(ite match_{a}_{q} 1 0)")));
                    let hit = and2(format!("match_{a}_{r}"), format!("(= {before} (- {idx} 1))"));
                    acc = ite(hit, format!("val_{a}_{r}_{fi}"), acc);
                }
                acc
            }
            Expr::This(f) => {
                let (n, r) = cx.this.ok_or_else(|| self.unsupported(cx.txn, &format!("`this.{f}` outside WHERE")))?;
                let fi = self
                    .table(self.table_of[n])
                    .field_index(f)
                    .ok_or_else(|| self.unsupported(cx.txn, &format!("unknown field `{f}`")))?;
                format!("val_{n}_{r}_{fi}")
            }
        })
    }

    fn boolean(&self, b: &BoolExpr, cx: &Cx) -> Result<String, EncodeError> {
        Ok(match b {
            BoolExpr::True => TRUE.into(),
            BoolExpr::False => FALSE.into(),
            BoolExpr::Cmp(l, op, r) => bin(cmp_op(*op), self.expr(l, cx)?, self.expr(r, cx)?),
            BoolExpr::Not(x) => not(self.boolean(x, cx)?),
            BoolExpr::And(l, r) => and2(self.boolean(l, cx)?, self.boolean(r, cx)?),
            BoolExpr::Or(l, r) => or([self.boolean(l, cx)?, self.boolean(r, cx)?]),
        })
    }

    /// Evaluating `e` raises no fault.
    fn safe_expr(&self, e: &Expr, cx: &Cx) -> Result<String, EncodeError> {
        Ok(match e {
            Expr::Int(_) | Expr::Arg(_) | Expr::Hole | Expr::Iter | Expr::This(_) => TRUE.into(),
            Expr::Bin(op, l, r) => {
                let mut parts = vec![self.safe_expr(l, cx)?, self.safe_expr(r, cx)?];
                if *op == BinOp::Div {
                    parts.push(not(format!("(= {} 0)", self.expr(r, cx)?)));
                }
                and(parts)
            }
            Expr::Any { constraint, .. } => {
                let mut inner = cx.clone();
                inner.hole = Some(self.expr(e, cx)?);
                inner.this = None;
                and2(self.safe_bool(constraint, &inner)?, self.boolean(constraint, &inner)?)
            }
            Expr::Size(v) => format!("reach_{}", self.var_site(cx, v)?),
            Expr::Proj(_, v, i) => {
                let a = self.var_site(cx, v)?;
                let idx = self.expr(i, cx)?;
                and([
                    format!("reach_{a}"),
                    self.safe_expr(i, cx)?,
                    format!("(>= {idx} 1)"),
                    format!("(<= {idx} {})", self.size(a)),
                ])
            }
        })
    }

    /// Evaluating `b` left to right with short-circuiting raises no fault.
    fn safe_bool(&self, b: &BoolExpr, cx: &Cx) -> Result<String, EncodeError> {
        Ok(match b {
            BoolExpr::True | BoolExpr::False => TRUE.into(),
            BoolExpr::Cmp(l, _, r) => and2(self.safe_expr(l, cx)?, self.safe_expr(r, cx)?),
            BoolExpr::Not(x) => self.safe_bool(x, cx)?,
            BoolExpr::And(l, r) => {
                and2(self.safe_bool(l, cx)?, implies(self.boolean(l, cx)?, self.safe_bool(r, cx)?))
            }
            BoolExpr::Or(l, r) => {
                and2(self.safe_bool(l, cx)?, implies(not(self.boolean(l, cx)?), self.safe_bool(r, cx)?))
            }
        })
    }

    /// Guards in order, each safe when its predecessors hold. Returns the
    /// conjunction of the guards.
    fn guard_chain(&mut self, ty: &str, guards: &[BoolExpr], cx: &Cx) -> Result<String, EncodeError> {
        let mut held = vec![ty.to_string()];
        for g in guards {
            self.s.assert(implies(and(held.clone()), self.safe_bool(g, cx)?));
            held.push(self.boolean(g, cx)?);
        }
        Ok(and(held))
    }

    fn build(&mut self, assumptions: &[Assumption]) -> Result<(), EncodeError> {
        self.slots_and_nodes()?;
        self.records_and_init(assumptions);
        self.execution()?;
        self.db();
        self.dependencies();
        self.anomaly();
        Ok(())
    }

    fn slots_and_nodes(&mut self) -> Result<(), EncodeError> {
        self.s.comment("slots: transaction types, arguments, abstract values");
        let types = self.enc.unrolled.len();
        for slot in 0..self.slots() {
            let mut tys = Vec::new();
            for t in 0..types {
                let ty = format!("ty_{slot}_{t}");
                self.s.declare_bool(&ty);
                tys.push(ty);
                for a in 0..self.enc.unrolled[t].params.len() {
                    self.bounded(&format!("arg_{slot}_{t}_{a}"));
                }
                for k in 0..self.enc.unrolled[t].abs.len() {
                    self.bounded(&format!("abs_{slot}_{t}_{k}"));
                }
            }
            for c in exactly_one(&tys) {
                self.s.assert(c);
            }
        }
        self.s.comment("nodes: execution, timestamps, partitions, replication");
        let n = self.nodes.len();
        let p = self.enc.config.partitions;
        for i in 0..n {
            self.s.declare_bool(&format!("reach_{i}"));
            self.s.declare_int(&format!("ts_{i}"));
            self.s.declare_int(&format!("tau_{i}"));
            self.s.assert(format!("(<= 0 tau_{i} {})", p - 1));
            self.s.assert(format!("(<= 0 ts_{i})"));
            for q in 0..p {
                self.s.declare_bool(&format!("mem_{i}_{q}"));
                self.s.assert(implies(format!("(= tau_{i} {q})"), format!("mem_{i}_{q}")));
            }
        }
        if n > 1 {
            self.s.assert(format!("(distinct {})", (0..n).map(|i| format!("ts_{i}")).collect::<Vec<_>>().join(" ")));
        }
        for a in 0..n {
            for b in 0..n {
                let (na, nb) = (self.nodes[a], self.nodes[b]);
                if na.slot == nb.slot && na.txn == nb.txn && na.site < nb.site {
                    self.s.assert(format!("(< ts_{a} ts_{b})"));
                }
                if na.slot < nb.slot && na.slot < self.bounds.serial {
                    self.s.assert(format!("(< ts_{a} ts_{b})"));
                }
            }
        }
        for i in 0..n {
            if !self.is_cycle(i) {
                for q in 0..p {
                    self.s.assert(format!("mem_{i}_{q}"));
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    let tau = or((0..p).map(|q| and2(format!("(= tau_{b} {q})"), format!("mem_{a}_{q}"))));
                    self.s.define(
                        &format!("vis_{a}_{b}"),
                        "Bool",
                        and([format!("reach_{a}"), format!("(< ts_{a} ts_{b})"), tau]),
                    );
                }
            }
        }
        Ok(())
    }

    fn records_and_init(&mut self, assumptions: &[Assumption]) {
        self.s.comment("records: keys, initial values, initial liveness");
        let r_count = self.records();
        for t in 0..self.enc.schema.tables.len() {
            let table = self.table(t).clone();
            let pk = table.pk_indices();
            for r in 0..r_count {
                let alive = format!("ialive_{t}_{r}");
                self.s.declare_bool(&alive);
                for j in 0..pk.len() {
                    self.bounded(&format!("key_{t}_{r}_{j}"));
                }
                for f in 0..table.fields.len() {
                    let name = format!("init_{t}_{r}_{f}");
                    self.bounded(&name);
                    self.s.assert(implies(not(alive.clone()), format!("(= {name} 0)")));
                }
                for (j, &f) in pk.iter().enumerate() {
                    self.s.assert(implies(alive.clone(), format!("(= init_{t}_{r}_{f} key_{t}_{r}_{j})")));
                }
                if r + 1 < r_count {
                    self.s.assert(lex_less(t, r, r + 1, pk.len()));
                }
            }
            for a in assumptions {
                match a {
                    Assumption::Empty(name) if *name == table.name => {
                        for r in 0..r_count {
                            self.s.assert(not(format!("ialive_{t}_{r}")));
                        }
                    }
                    Assumption::Compare { table: name, field, op, value } if *name == table.name => {
                        let f = table.field_index(field).expect("checked field");
                        for r in 0..r_count {
                            let v = if f == table.fields.len() {
                                "1".to_string()
                            } else {
                                format!("init_{t}_{r}_{f}")
                            };
                            self.s.assert(implies(
                                format!("ialive_{t}_{r}"),
                                bin(cmp_op(*op), v, int(*value)),
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    fn init_value(&self, t: usize, r: usize, f: usize) -> String {
        if f == self.table(t).fields.len() {
            format!("(ite ialive_{t}_{r} 1 0)")
        } else {
            format!("init_{t}_{r}_{f}")
        }
    }

    fn execution(&mut self) -> Result<(), EncodeError> {
        self.s.comment("execution: reachability, matches, writes, reads, views");
        let n = self.nodes.len();
        let r_count = self.records();
        // Universe: initially alive records plus executed inserts.
        let mut inserts: BTreeMap<usize, Vec<(usize, Vec<String>)>> = BTreeMap::new();
        for i in 0..n {
            let info = self.nodes[i];
            let site = self.site(i).clone();
            let cx = Cx { slot: info.slot, txn: info.txn, scope: &site.scope, this: None, hole: None };
            let ty = format!("ty_{}_{}", info.slot, info.txn);
            let reach = self.guard_chain(&ty, &site.guards, &cx)?;
            self.s.assert(format!("(= reach_{i} {reach})"));
            if let QueryKind::Insert { values } = &site.query.kind {
                let table = self.table(self.table_of[i]).clone();
                let mut key = Vec::new();
                for k in &table.primary_key {
                    let e = &values.iter().find(|(f, _)| f == k).expect("insert covers key").1;
                    key.push(self.expr(e, &cx)?);
                }
                inserts.entry(self.table_of[i]).or_default().push((i, key));
            }
        }
        for t in 0..self.enc.schema.tables.len() {
            for r in 0..r_count {
                let ins: Vec<String> = inserts
                    .get(&t)
                    .into_iter()
                    .flatten()
                    .map(|(i, key)| and2(format!("reach_{i}"), key_is(t, r, key)))
                    .collect();
                let mut parts = vec![format!("ialive_{t}_{r}")];
                parts.extend(ins);
                self.s.define(&format!("univ_{t}_{r}"), "Bool", or(parts));
            }
        }
        // Loop counts stay within the unroll bound.
        for (ti, u) in self.enc.unrolled.clone().iter().enumerate() {
            for slot in 0..self.slots() {
                for l in &u.loops {
                    let cx = Cx { slot, txn: ti, scope: &l.scope, this: None, hole: None };
                    let ty = format!("ty_{slot}_{ti}");
                    let held = self.guard_chain(&ty, &l.guards, &cx)?;
                    let count = self.expr(&l.count, &cx)?;
                    let ok = and2(self.safe_expr(&l.count, &cx)?, format!("(<= {count} {})", self.enc.config.unroll));
                    self.s.assert(implies(held, ok));
                }
            }
        }
        for i in 0..n {
            self.node_effects(i)?;
        }
        // Views: the latest visible write, else the initial value.
        for i in 0..n {
            let t = self.table_of[i];
            for f in 0..=self.table(t).fields.len() {
                let ws: Vec<usize> = self.writers.get(&(t, f)).cloned().unwrap_or_default();
                for r in 0..r_count {
                    let mut acc = self.init_value(t, r, f);
                    for &w in ws.iter().filter(|&&w| w != i) {
                        let others = ws.iter().filter(|&&o| o != w && o != i).map(|&o| {
                            not(and([format!("wr_{o}_{r}_{f}"), format!("vis_{o}_{i}"), format!("(> ts_{o} ts_{w})")]))
                        });
                        let mut parts = vec![format!("wr_{w}_{r}_{f}"), format!("vis_{w}_{i}")];
                        parts.extend(others);
                        let src = format!("src_{w}_{i}_{r}_{f}");
                        self.s.define(&src, "Bool", and(parts));
                        acc = ite(src, format!("wv_{w}_{r}_{f}"), acc);
                    }
                    self.s.define(&format!("val_{i}_{r}_{f}"), "Int", acc);
                }
            }
        }
        Ok(())
    }

    fn node_effects(&mut self, i: usize) -> Result<(), EncodeError> {
        let info = self.nodes[i];
        let site = self.site(i).clone();
        let t = self.table_of[i];
        let table = self.table(t).clone();
        let r_count = self.records();
        let q = &site.query;
        let reach = format!("reach_{i}");
        let base = Cx { slot: info.slot, txn: info.txn, scope: &site.scope, this: None, hole: None };
        let alive_f = table.fields.len();
        let mut scan = false;
        if let Some(cond) = q.cond() {
            let lookup = is_pk_lookup(&table, cond);
            scan = !lookup;
            let mut key_match: Vec<String> = vec![TRUE.into(); r_count];
            if lookup {
                let terms = pk_lookup_terms(cond);
                let mut safe = Vec::new();
                let mut key = Vec::new();
                for k in &table.primary_key {
                    let (_, e) = terms.iter().find(|(f, _)| f == k).expect("lookup covers the key");
                    safe.push(self.safe_expr(e, &base)?);
                    key.push(self.expr(e, &base)?);
                }
                self.s.assert(implies(reach.clone(), and(safe)));
                for (r, km) in key_match.iter_mut().enumerate() {
                    *km = key_is(t, r, &key);
                }
            }
            for (r, km) in key_match.iter().enumerate() {
                let mut cx = base.clone();
                cx.this = Some((i, r));
                let alive = format!("(= val_{i}_{r}_{alive_f} 1)");
                let present = if scan { format!("univ_{t}_{r}") } else { km.clone() };
                let ctx = and([reach.clone(), present.clone(), alive.clone()]);
                self.s.assert(implies(ctx.clone(), self.safe_bool(cond, &cx)?));
                self.s.define(&format!("match_{i}_{r}"), "Bool", and2(ctx, self.boolean(cond, &cx)?));
            }
        }
        match &q.kind {
            QueryKind::Update { field, value, .. } => {
                let f = table.field_index(field).expect("validated field");
                let any = or((0..r_count).map(|r| format!("match_{i}_{r}")));
                self.s.assert(implies(any, self.safe_expr(value, &base)?));
                let v = self.expr(value, &base)?;
                for r in 0..r_count {
                    self.s.define(&format!("wr_{i}_{r}_{f}"), "Bool", format!("match_{i}_{r}"));
                    self.s.define(&format!("wv_{i}_{r}_{f}"), "Int", v.clone());
                }
            }
            QueryKind::Delete { .. } => {
                for r in 0..r_count {
                    self.s.define(&format!("wr_{i}_{r}_{alive_f}"), "Bool", format!("match_{i}_{r}"));
                    self.s.define(&format!("wv_{i}_{r}_{alive_f}"), "Int", "0".into());
                }
            }
            QueryKind::Insert { values } => {
                let mut safe = Vec::new();
                let mut vals = BTreeMap::new();
                for (f, e) in values {
                    safe.push(self.safe_expr(e, &base)?);
                    vals.insert(table.field_index(f).expect("validated field"), self.expr(e, &base)?);
                }
                self.s.assert(implies(reach.clone(), and(safe)));
                let key: Vec<String> = table.pk_indices().iter().map(|f| vals[f].clone()).collect();
                let mut hits = Vec::new();
                for r in 0..r_count {
                    let hit = and2(reach.clone(), key_is(t, r, &key));
                    hits.push(hit.clone());
                    for f in 0..=alive_f {
                        self.s.define(&format!("wr_{i}_{r}_{f}"), "Bool", hit.clone());
                        let v = if f == alive_f { "1".to_string() } else { vals[&f].clone() };
                        self.s.define(&format!("wv_{i}_{r}_{f}"), "Int", v);
                    }
                }
                self.s.assert(implies(reach.clone(), or(hits)));
            }
            QueryKind::Select { .. } | QueryKind::SelectAgg { .. } => {}
        }
        let selected = match &q.kind {
            QueryKind::Select { field, .. } => table.field_index(field),
            _ => None,
        };
        let scanned: BTreeSet<usize> = match q.cond() {
            Some(cond) if scan => where_fields(cond).iter().map(|f| table.field_index(f).expect("field")).collect(),
            _ => BTreeSet::new(),
        };
        for &f in &self.reads[i].clone() {
            for r in 0..r_count {
                let mut parts = Vec::new();
                if scanned.contains(&f) {
                    parts.push(and2(reach.clone(), format!("univ_{t}_{r}")));
                }
                if selected == Some(f) {
                    parts.push(format!("match_{i}_{r}"));
                }
                self.s.define(&format!("rd_{i}_{r}_{f}"), "Bool", or(parts));
            }
        }
        Ok(())
    }

    fn same_txn(&self, a: usize, b: usize) -> bool {
        let (x, y) = (self.nodes[a], self.nodes[b]);
        a != b && x.slot == y.slot && x.txn == y.txn
    }

    fn st_plus(&self, a: usize, b: usize) -> bool {
        let (x, y) = (self.nodes[a], self.nodes[b]);
        self.same_txn(a, b) && self.enc.unrolled[x.txn].st_plus()[x.site][y.site]
    }

    fn db(&mut self) {
        self.s.comment("guarantees");
        let n = self.nodes.len();
        for a in 0..n {
            for b in 0..n {
                if self.same_txn(a, b) {
                    self.s.define(&format!("ST_{a}_{b}"), "Bool", and2(format!("reach_{a}"), format!("reach_{b}")));
                    if self.st_plus(a, b) {
                        self.s.define(&format!("STP_{a}_{b}"), "Bool", format!("ST_{a}_{b}"));
                    }
                }
            }
        }
        let g = self.enc.config.spec;
        let reach = |x: usize| format!("reach_{x}");
        let vis = |x: usize, y: usize| format!("vis_{x}_{y}");
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                if g.lin {
                    self.s.assert(implies(
                        and([reach(a), reach(b), format!("(< ts_{a} ts_{b})")]),
                        vis(a, b),
                    ));
                }
                if g.cc && self.same_txn(a, b) && a < b {
                    self.s.assert(implies(format!("ST_{a}_{b}"), or([vis(a, b), vis(b, a)])));
                }
                for c in 0..n {
                    if c == a || c == b {
                        continue;
                    }
                    if g.cv || g.cc {
                        self.s.assert(implies(and([vis(a, b), vis(b, c), reach(c)]), vis(a, c)));
                    }
                    let other = self.nodes[c].slot != self.nodes[a].slot;
                    if self.same_txn(a, b) && other {
                        if g.rc {
                            self.s.assert(implies(
                                and([format!("ST_{a}_{b}"), vis(a, c), reach(c)]),
                                vis(b, c),
                            ));
                        }
                        if g.rr {
                            self.s.assert(implies(and([format!("ST_{a}_{b}"), vis(c, a)]), vis(c, b)));
                        }
                    }
                }
            }
        }
    }

    fn writes_cell(&self, n: usize, t: usize, f: usize) -> bool {
        self.table_of[n] == t && self.writes[n].contains(&f)
    }

    fn reads_cell(&self, n: usize, t: usize, f: usize) -> bool {
        self.table_of[n] == t && self.reads[n].contains(&f)
    }

    /// Whether dependency `kind` from `a` to `b` can exist on `(t, f)`.
    fn dep_possible(&self, kind: DepKind, a: usize, b: usize, t: usize, f: usize) -> bool {
        if !self.is_cycle(a) || !self.is_cycle(b) || self.nodes[a].slot == self.nodes[b].slot {
            return false;
        }
        match kind {
            DepKind::WR => self.writes_cell(a, t, f) && self.reads_cell(b, t, f),
            DepKind::RW => self.reads_cell(a, t, f) && self.writes_cell(b, t, f),
            DepKind::WW => self.writes_cell(a, t, f) && self.writes_cell(b, t, f),
            _ => false,
        }
    }

    fn dependencies(&mut self) {
        self.s.comment("dependencies per record and field");
        let n = self.nodes.len();
        for (t, f) in self.cells.clone() {
            let ws: Vec<usize> = self.writers.get(&(t, f)).cloned().unwrap_or_default();
            for a in 0..n {
                for b in 0..n {
                    for kind in DEP_KINDS {
                        if !self.dep_possible(kind, a, b, t, f) {
                            continue;
                        }
                        for r in 0..self.records() {
                            let def = match kind {
                                DepKind::WR => and2(format!("rd_{b}_{r}_{f}"), format!("src_{a}_{b}_{r}_{f}")),
                                DepKind::RW => {
                                    let mut parts = vec![format!("rd_{a}_{r}_{f}"), format!("wr_{b}_{r}_{f}")];
                                    for &w in ws.iter().filter(|&&w| w != a) {
                                        parts.push(implies(
                                            format!("src_{w}_{a}_{r}_{f}"),
                                            format!("(< ts_{w} ts_{b})"),
                                        ));
                                    }
                                    and(parts)
                                }
                                _ => and([
                                    format!("wr_{a}_{r}_{f}"),
                                    format!("wr_{b}_{r}_{f}"),
                                    format!("(< ts_{a} ts_{b})"),
                                ]),
                            };
                            self.s.define(&format!("{}_{a}_{b}_{r}_{f}", kind_tag(kind)), "Bool", def);
                        }
                    }
                }
            }
        }
    }

    fn anomaly(&mut self) {
        self.s.comment("cycle");
        let k = self.bounds.len;
        let cyc: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.is_cycle(i)).collect();
        let r_count = self.records();
        for m in 0..k {
            let vars: Vec<String> = cyc.iter().map(|i| format!("cyc_{m}_{i}")).collect();
            for v in &vars {
                self.s.declare_bool(v);
            }
            for c in exactly_one(&vars) {
                self.s.assert(c);
            }
            for &i in &cyc {
                self.s.assert(implies(format!("cyc_{m}_{i}"), format!("reach_{i}")));
            }
            let eks: Vec<String> = EDGE_KINDS.iter().map(|kd| format!("ek_{m}_{}", kind_tag(*kd))).collect();
            for v in &eks {
                self.s.declare_bool(v);
            }
            for c in exactly_one(&eks) {
                self.s.assert(c);
            }
            let efs: Vec<String> = (0..self.cells.len()).map(|c| format!("ef_{m}_{c}")).collect();
            let ews: Vec<String> = (0..r_count).map(|r| format!("ew_{m}_{r}")).collect();
            for v in efs.iter().chain(&ews) {
                self.s.declare_bool(v);
            }
            for c in exactly_one(&efs).into_iter().chain(exactly_one(&ews)) {
                self.s.assert(c);
            }
            self.s.assert(implies(format!("ek_{m}_ST"), and2(efs[0].clone(), ews[0].clone())));
        }
        for &i in &cyc {
            let vars: Vec<String> = (0..k).map(|m| format!("cyc_{m}_{i}")).collect();
            for a in 0..k {
                for b in a + 1..k {
                    self.s.assert(not(and2(vars[a].clone(), vars[b].clone())));
                }
            }
        }
        for slot in self.bounds.serial..self.slots() {
            self.s.assert(or(cyc
                .iter()
                .filter(|&&i| self.nodes[i].slot == slot)
                .flat_map(|i| (0..k).map(move |m| format!("cyc_{m}_{i}")))));
        }
        self.s.assert(format!("ek_{}_ST", k - 1));
        self.s.assert(not("ek_0_ST".into()));
        self.s.assert(not(format!("ek_{}_ST", k - 2)));
        for m in 0..k {
            let next = (m + 1) % k;
            self.s.assert(not(and2(format!("ek_{m}_ST"), format!("ek_{next}_ST"))));
            let mut st = Vec::new();
            for &a in &cyc {
                for &b in &cyc {
                    let ok = if self.enc.config.internal_only { self.st_plus(a, b) } else { self.same_txn(a, b) };
                    if ok {
                        st.push(and2(format!("cyc_{m}_{a}"), format!("cyc_{next}_{b}")));
                    }
                }
            }
            self.s.assert(implies(format!("ek_{m}_ST"), or(st)));
            for (c, &(t, f)) in self.cells.clone().iter().enumerate() {
                for kind in DEP_KINDS {
                    for r in 0..r_count {
                        let mut options = Vec::new();
                        for &a in &cyc {
                            for &b in &cyc {
                                if !self.dep_possible(kind, a, b, t, f) {
                                    continue;
                                }
                                let distinct = match kind {
                                    DepKind::RW => not(format!("(= val_{a}_{r}_{f} wv_{b}_{r}_{f})")),
                                    DepKind::WW => not(format!("(= wv_{a}_{r}_{f} wv_{b}_{r}_{f})")),
                                    _ => TRUE.into(),
                                };
                                options.push(and([
                                    format!("cyc_{m}_{a}"),
                                    format!("cyc_{next}_{b}"),
                                    format!("{}_{a}_{b}_{r}_{f}", kind_tag(kind)),
                                    distinct,
                                ]));
                            }
                        }
                        let chosen = and([
                            format!("ek_{m}_{}", kind_tag(kind)),
                            format!("ef_{m}_{c}"),
                            format!("ew_{m}_{r}"),
                        ]);
                        self.s.assert(implies(chosen, or(options)));
                    }
                }
            }
        }
    }
}

/// Record `r` of table `t` has exactly the key `key`.
fn key_is(t: usize, r: usize, key: &[String]) -> String {
    and(key.iter().enumerate().map(|(j, k)| format!("(= key_{t}_{r}_{j} {k})")))
}

/// Keys of records `a` and `b` are lexicographically increasing.
fn lex_less(t: usize, a: usize, b: usize, width: usize) -> String {
    let mut acc = FALSE.to_string();
    for j in (0..width).rev() {
        let ka = format!("key_{t}_{a}_{j}");
        let kb = format!("key_{t}_{b}_{j}");
        acc = or([format!("(< {ka} {kb})"), and2(format!("(= {ka} {kb})"), acc)]);
    }
    acc
}
