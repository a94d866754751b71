//! Deterministic simulator of a partitioned replicated store.
//!
//! Every scheduled step executes one query instance at one partition. The
//! step observes the effects delivered to that partition, appends its own
//! effects after all existing ones in arbitration order, and replicates
//! them to every partition of the executing partition's connected group.

use crate::model::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use thiserror::Error;

/// One fetched row: selected field plus primary-key fields.
pub type Row = BTreeMap<String, i64>;

/// Runtime fault raised by expression evaluation.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Fault {
    #[error("proj index {index} out of bounds for `{var}` of size {size}")]
    ProjOutOfBounds { var: String, index: i64, size: usize },
    #[error("field `{field}` is not available in the rows of `{var}`")]
    ProjField { var: String, field: String },
    #[error("unbound variable `{0}`")]
    UnboundVar(String),
    #[error("unbound argument `{0}`")]
    UnboundArg(String),
    #[error("division by zero")]
    DivByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("`_` used outside any{{}}")]
    HoleOutsideAny,
    #[error("`iter` used outside a loop")]
    IterOutsideLoop,
    #[error("`this.{0}` evaluated without a record")]
    ThisWithoutRecord(String),
    #[error("no value chosen for abstract variable `{0}`")]
    MissingAbs(String),
    #[error("value {value} for `{label}` violates its any{{}} constraint")]
    AnyViolated { label: String, value: i64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("unknown transaction `{0}`")]
    UnknownTxn(String),
    #[error("transaction `{txn}` expects {expected} arguments, got {got}")]
    ArgCount { txn: String, expected: usize, got: usize },
    #[error("step {step}: unknown instance {instance}")]
    UnknownInstance { step: usize, instance: usize },
    #[error("step {step}: unknown partition {partition}")]
    UnknownPartition { step: usize, partition: usize },
    #[error("step {step}: partition groups do not partition the {partitions} partitions")]
    BadGroups { step: usize, partitions: usize },
    #[error("step {step}: scheduled {query} but the instance's next reachable query is {expected}")]
    ScheduleMismatch { step: usize, query: QueryInstanceId, expected: String },
    #[error("step {step} ({query}): {fault}")]
    Fault { step: usize, query: QueryInstanceId, fault: Fault },
    #[error("instance Ins{}: loop count {count} exceeds the unroll bound {bound}", .instance + 1)]
    LoopBound { instance: usize, count: i64, bound: usize },
    #[error("instance Ins{}: reachable query O{} was never scheduled", .instance + 1, .site + 1)]
    Incomplete { instance: usize, site: usize },
    #[error("instance Ins{}: {fault}", .instance + 1)]
    InstanceFault { instance: usize, fault: Fault },
    #[error("initial row {table}{key:?} has alive value {alive}")]
    InitAlive { table: String, key: Vec<i64>, alive: i64 },
    #[error("initial row for unknown table `{0}`")]
    InitTable(String),
    #[error("initial row {table}{key:?} is missing field `{field}`")]
    InitField { table: String, key: Vec<i64>, field: String },
}

/// A spawned transaction instance with its argument valuation and the
/// values chosen for its `any{}` occurrences (keyed by unrolled label).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub txn: String,
    pub args: Vec<i64>,
    pub abs: BTreeMap<String, i64>,
}

/// One scheduled query execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub instance: usize,
    /// Unrolled site index (0-based).
    pub site: usize,
    pub partition: PartitionId,
    /// Connected partition groups at this step; empty means fully connected.
    pub groups: Vec<Vec<PartitionId>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitRow {
    pub table: String,
    pub key: Vec<i64>,
    /// Every declared field and `alive`.
    pub values: BTreeMap<String, i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOracle {
    pub partitions: usize,
    pub unroll: usize,
    pub instances: Vec<Instance>,
    pub schedule: Vec<ScheduleStep>,
    pub init: Vec<InitRow>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub query: QueryInstanceId,
    pub partition: PartitionId,
    /// Indices of the effects created by the step.
    pub effects: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    /// `states[0]` holds the initial database; `states[k]` follows step k.
    pub states: Vec<SystemState>,
    pub steps: Vec<StepRecord>,
    pub instances: Vec<Instance>,
    /// Same-transaction site pairs linked by dataflow, per transaction name.
    pub st_plus: BTreeMap<String, Vec<Vec<bool>>>,
    /// Site ordinal (source position) per unrolled site, per transaction.
    pub ordinals: BTreeMap<String, Vec<usize>>,
    pub init: Vec<InitRow>,
    pub unroll: usize,
}

impl History {
    pub fn final_state(&self) -> &SystemState {
        self.states.last().expect("history has an initial state")
    }

    pub fn txn_name(&self, instance: usize) -> &str {
        &self.instances[instance].txn
    }

    /// One effect per line: `step id kind key field value partition`.
    pub fn trace(&self) -> String {
        let st = self.final_state();
        let mut out = String::new();
        for e in &st.effects {
            let kind = match (e.kind, e.used) {
                (EffectKind::Write, _) => "wr",
                (EffectKind::Read, true) => "rd",
                (EffectKind::Read, false) => "rd+",
            };
            let key: Vec<String> = e.key.iter().map(|k| k.to_string()).collect();
            let value = e.value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{} {} {} {}({}) {} {} {}",
                e.id.step,
                e.id,
                kind,
                e.table,
                key.join(","),
                e.field,
                value,
                e.partition
            );
        }
        out
    }
}

/// Applies the write effects among `effects` in arbitration order.
pub fn local_view(state: &SystemState, effects: impl IntoIterator<Item = usize>) -> LocalView {
    let mut latest: BTreeMap<(String, Vec<i64>, String), (u64, i64)> = BTreeMap::new();
    for i in effects {
        let e = &state.effects[i];
        if e.kind != EffectKind::Write {
            continue;
        }
        let v = e.value.expect("writes carry values");
        let cell = (e.table.clone(), e.key.clone(), e.field.clone());
        match latest.get(&cell) {
            Some((t, _)) if *t > state.ar[i] => {}
            _ => {
                latest.insert(cell, (state.ar[i], v));
            }
        }
    }
    let mut view = LocalView::default();
    for ((t, k, f), (_, v)) in latest {
        view.rows.entry((t, k)).or_default().insert(f, v);
    }
    view
}

/// Bindings visible to an expression.
#[derive(Clone, Debug, Default)]
pub struct Env {
    pub args: BTreeMap<String, i64>,
    /// Result rows per variable name.
    pub vars: BTreeMap<String, Vec<Row>>,
    /// Value and label per unrolled abstract-variable id.
    pub abs: BTreeMap<usize, (String, Option<i64>)>,
    pub abs_constraints: BTreeMap<usize, BoolExpr>,
    pub hole: Option<i64>,
}

fn arith(op: BinOp, a: i64, b: i64) -> Result<i64, Fault> {
    match op {
        BinOp::Add => a.checked_add(b).ok_or(Fault::Overflow),
        BinOp::Sub => a.checked_sub(b).ok_or(Fault::Overflow),
        BinOp::Mul => a.checked_mul(b).ok_or(Fault::Overflow),
        BinOp::Div if b == 0 => Err(Fault::DivByZero),
        BinOp::Div => a.checked_div_euclid(b).ok_or(Fault::Overflow),
    }
}

/// Evaluates `e`; `record` supplies `this.f`.
pub fn eval_expr(e: &Expr, env: &Env, record: Option<&Row>) -> Result<i64, Fault> {
    match e {
        Expr::Int(n) => Ok(*n),
        Expr::Arg(a) => env.args.get(a).copied().ok_or_else(|| Fault::UnboundArg(a.clone())),
        Expr::Bin(op, l, r) => arith(*op, eval_expr(l, env, record)?, eval_expr(r, env, record)?),
        Expr::Any { id, .. } => {
            let (label, value) = env.abs.get(id).cloned().ok_or_else(|| Fault::MissingAbs(format!("abs#{id}")))?;
            let value = value.ok_or_else(|| Fault::MissingAbs(label.clone()))?;
            if let Some(c) = env.abs_constraints.get(id) {
                let mut inner = env.clone();
                inner.hole = Some(value);
                if !eval_bool(c, &inner, None)? {
                    return Err(Fault::AnyViolated { label, value });
                }
            }
            Ok(value)
        }
        Expr::Hole => env.hole.ok_or(Fault::HoleOutsideAny),
        Expr::Iter => Err(Fault::IterOutsideLoop),
        Expr::Size(v) => {
            let rows = env.vars.get(v).ok_or_else(|| Fault::UnboundVar(v.clone()))?;
            Ok(rows.len() as i64)
        }
        Expr::Proj(f, v, i) => {
            let rows = env.vars.get(v).ok_or_else(|| Fault::UnboundVar(v.clone()))?;
            let idx = eval_expr(i, env, record)?;
            if idx < 1 || idx as usize > rows.len() {
                return Err(Fault::ProjOutOfBounds { var: v.clone(), index: idx, size: rows.len() });
            }
            rows[idx as usize - 1]
                .get(f)
                .copied()
                .ok_or_else(|| Fault::ProjField { var: v.clone(), field: f.clone() })
        }
        Expr::This(f) => record.and_then(|r| r.get(f).copied()).ok_or_else(|| Fault::ThisWithoutRecord(f.clone())),
    }
}

/// Evaluates `b` with short-circuiting `AND`/`OR`.
pub fn eval_bool(b: &BoolExpr, env: &Env, record: Option<&Row>) -> Result<bool, Fault> {
    Ok(match b {
        BoolExpr::True => true,
        BoolExpr::False => false,
        BoolExpr::Cmp(l, op, r) => op.holds(eval_expr(l, env, record)?, eval_expr(r, env, record)?),
        BoolExpr::Not(x) => !eval_bool(x, env, record)?,
        BoolExpr::And(l, r) => eval_bool(l, env, record)? && eval_bool(r, env, record)?,
        BoolExpr::Or(l, r) => eval_bool(l, env, record)? || eval_bool(r, env, record)?,
    })
}

/// Inputs of a single query step.
pub struct StepInput<'a> {
    pub schema: &'a Schema,
    pub query: &'a Query,
    pub id: QueryInstanceId,
    pub partition: PartitionId,
    /// Partitions that receive the new effects (includes `partition`).
    pub group: &'a [PartitionId],
    pub env: &'a Env,
    /// Record keys per table considered by scans.
    pub universe: &'a BTreeMap<String, BTreeSet<Vec<i64>>>,
    pub step: usize,
    /// Value of the `used` flag for the step's read effects.
    pub reads_used: bool,
}

/// Executes one query at one partition, extending `state`. Returns the new
/// effect indices and, for SELECTs, the fetched rows in key order.
pub fn step_query(state: &mut SystemState, input: &StepInput) -> Result<(Vec<usize>, Option<Vec<Row>>), Fault> {
    let q = input.query;
    let table = input.schema.table(&q.table).expect("validated table");
    let view = local_view(state, state.delivered[input.partition].iter().copied());
    let record = |key: &[i64]| -> Row {
        let mut r = Row::new();
        for f in table.all_fields() {
            r.insert(f.clone(), view.get(&table.name, key, &f));
        }
        r
    };
    let mut reads: Vec<(Vec<i64>, String, i64)> = Vec::new();
    let mut writes: Vec<(Vec<i64>, String, i64)> = Vec::new();
    let mut result = None;

    let matched = match q.cond() {
        None => vec![],
        Some(cond) => {
            let candidates: Vec<Vec<i64>> = if is_pk_lookup(table, cond) {
                let terms = pk_lookup_terms(cond);
                let mut key = Vec::new();
                for k in &table.primary_key {
                    let (_, e) = terms.iter().find(|(f, _)| f == k).expect("lookup covers the key");
                    key.push(eval_expr(e, input.env, None)?);
                }
                vec![key]
            } else {
                let keys: Vec<Vec<i64>> = input.universe.get(&table.name).into_iter().flatten().cloned().collect();
                let fields = where_fields(cond);
                for k in &keys {
                    for f in table.all_fields().iter().filter(|f| fields.contains(*f)) {
                        reads.push((k.clone(), f.clone(), view.get(&table.name, k, f)));
                    }
                }
                keys
            };
            let mut m = Vec::new();
            for k in candidates {
                let r = record(&k);
                if r[ALIVE] == 1 && eval_bool(cond, input.env, Some(&r))? {
                    m.push((k, r));
                }
            }
            m
        }
    };

    match &q.kind {
        QueryKind::Select { field, .. } => {
            let mut rows = Vec::new();
            for (k, r) in &matched {
                reads.push((k.clone(), field.clone(), r[field]));
                let mut row = Row::new();
                row.insert(field.clone(), r[field]);
                for pk in &table.primary_key {
                    row.insert(pk.clone(), r[pk]);
                }
                rows.push(row);
            }
            result = Some(rows);
        }
        QueryKind::SelectAgg { agg, field, .. } => {
            for (k, r) in &matched {
                reads.push((k.clone(), field.clone(), r[field]));
            }
            let vals = matched.iter().map(|(_, r)| r[field]);
            let v = match agg {
                Agg::Min => vals.min(),
                Agg::Max => vals.max(),
            };
            result = Some(v.map(|v| vec![Row::from([(field.clone(), v)])]).unwrap_or_default());
        }
        QueryKind::Update { field, value, .. } => {
            for (k, _) in &matched {
                writes.push((k.clone(), field.clone(), eval_expr(value, input.env, None)?));
            }
        }
        QueryKind::Delete { .. } => {
            for (k, _) in &matched {
                writes.push((k.clone(), ALIVE.to_string(), 0));
            }
        }
        QueryKind::Insert { values } => {
            let mut vals = BTreeMap::new();
            for (f, e) in values {
                vals.insert(f.clone(), eval_expr(e, input.env, None)?);
            }
            let key: Vec<i64> = table.primary_key.iter().map(|k| vals[k]).collect();
            for f in &table.fields {
                writes.push((key.clone(), f.clone(), vals[f]));
            }
            writes.push((key, ALIVE.to_string(), 1));
        }
    }

    let visible: Vec<usize> = state.delivered[input.partition].iter().copied().collect();
    let mut next_ar = state.ar.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut created = Vec::new();
    let all = reads
        .into_iter()
        .map(|(k, f, v)| (EffectKind::Read, k, f, v))
        .chain(writes.into_iter().map(|(k, f, v)| (EffectKind::Write, k, f, v)));
    for (ord, (kind, key, field, value)) in all.enumerate() {
        let idx = state.effects.len();
        state.effects.push(Effect {
            id: EffectId { step: input.step, ord },
            kind,
            table: table.name.clone(),
            key,
            field,
            value: Some(value),
            used: kind == EffectKind::Write || input.reads_used,
            query: Some(input.id),
            txn: Some(input.id.txn),
            partition: input.partition,
        });
        state.ar.push(next_ar);
        next_ar += 1;
        for &v in &visible {
            state.vis.insert((v, idx));
        }
        created.push(idx);
    }
    state.store[input.partition].extend(created.iter().copied());
    for &p in input.group {
        state.delivered[p].extend(created.iter().copied());
    }
    Ok((created, result))
}

/// Executes instances step by step; shared by scheduled and serial runs.
struct Executor<'a> {
    schema: &'a Schema,
    partitions: usize,
    bound: usize,
    instances: Vec<Instance>,
    init: Vec<InitRow>,
    unrolled: Vec<UnrolledTxn>,
    inst_txn: Vec<usize>,
    /// Next site to consider per instance.
    cursor: Vec<usize>,
    results: Vec<BTreeMap<usize, Vec<Row>>>,
    state: SystemState,
    states: Vec<SystemState>,
    steps: Vec<StepRecord>,
    universe: BTreeMap<String, BTreeSet<Vec<i64>>>,
    inserted: BTreeMap<String, BTreeSet<Vec<i64>>>,
}

impl<'a> Executor<'a> {
    fn new(
        oracle: &ExecutionOracle,
        prog: &Program,
        schema: &'a Schema,
        universe: BTreeMap<String, BTreeSet<Vec<i64>>>,
    ) -> Result<Self, SemanticsError> {
        let unrolled = unroll_program(prog, oracle.unroll);
        let mut inst_txn = Vec::new();
        for inst in &oracle.instances {
            let t = prog.txn_index(&inst.txn).ok_or_else(|| SemanticsError::UnknownTxn(inst.txn.clone()))?;
            let want = prog.transactions[t].params.len();
            if want != inst.args.len() {
                return Err(SemanticsError::ArgCount { txn: inst.txn.clone(), expected: want, got: inst.args.len() });
            }
            inst_txn.push(t);
        }
        let partitions = oracle.partitions.max(1);
        let mut state = SystemState::new(partitions);
        let mut ord = 0;
        for row in &oracle.init {
            let table = schema.table(&row.table).ok_or_else(|| SemanticsError::InitTable(row.table.clone()))?;
            let alive = row.values.get(ALIVE).copied().unwrap_or(1);
            if alive != 0 && alive != 1 {
                return Err(SemanticsError::InitAlive { table: row.table.clone(), key: row.key.clone(), alive });
            }
            for f in table.all_fields() {
                let v = if f == ALIVE {
                    alive
                } else {
                    *row.values.get(&f).ok_or_else(|| SemanticsError::InitField {
                        table: row.table.clone(),
                        key: row.key.clone(),
                        field: f.clone(),
                    })?
                };
                let idx = state.effects.len();
                state.effects.push(Effect {
                    id: EffectId { step: 0, ord },
                    kind: EffectKind::Write,
                    table: table.name.clone(),
                    key: row.key.clone(),
                    field: f,
                    value: Some(v),
                    used: true,
                    query: None,
                    txn: None,
                    partition: 0,
                });
                state.ar.push(idx as u64);
                state.store[0].insert(idx);
                for p in 0..partitions {
                    state.delivered[p].insert(idx);
                }
                ord += 1;
            }
        }
        let n = oracle.instances.len();
        Ok(Executor {
            schema,
            partitions,
            bound: oracle.unroll,
            instances: oracle.instances.clone(),
            init: oracle.init.clone(),
            unrolled,
            inst_txn,
            cursor: vec![0; n],
            results: vec![BTreeMap::new(); n],
            states: vec![state.clone()],
            state,
            steps: vec![],
            universe,
            inserted: BTreeMap::new(),
        })
    }

    fn env(&self, inst: usize, scope: &BTreeMap<String, usize>) -> Env {
        let u = &self.unrolled[self.inst_txn[inst]];
        let i = &self.instances[inst];
        let mut env = Env::default();
        for (p, v) in u.params.iter().zip(&i.args) {
            env.args.insert(p.clone(), *v);
        }
        for (var, site) in scope {
            if let Some(rows) = self.results[inst].get(site) {
                env.vars.insert(var.clone(), rows.clone());
            }
        }
        for (id, a) in u.abs.iter().enumerate() {
            let label = a.label();
            env.abs.insert(id, (label.clone(), i.abs.get(&label).copied()));
            env.abs_constraints.insert(id, a.constraint.clone());
        }
        env
    }

    /// First site at or after the cursor whose guards all hold.
    fn next_site(&self, inst: usize) -> Result<Option<usize>, Fault> {
        let u = &self.unrolled[self.inst_txn[inst]];
        for s in self.cursor[inst]..u.sites.len() {
            let site = &u.sites[s];
            let env = self.env(inst, &site.scope);
            let mut ok = true;
            for g in &site.guards {
                if !eval_bool(g, &env, None)? {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(Some(s));
            }
        }
        Ok(None)
    }

    fn exec(&mut self, inst: usize, site: usize, partition: usize, groups: &[Vec<usize>]) -> Result<(), SemanticsError> {
        let step = self.steps.len() + 1;
        let qid = QueryInstanceId { txn: inst, site };
        if inst >= self.instances.len() {
            return Err(SemanticsError::UnknownInstance { step, instance: inst });
        }
        if partition >= self.partitions {
            return Err(SemanticsError::UnknownPartition { step, partition });
        }
        let group: Vec<usize> = if groups.is_empty() {
            (0..self.partitions).collect()
        } else {
            let mut seen = BTreeSet::new();
            for g in groups {
                for &p in g {
                    if p >= self.partitions || !seen.insert(p) {
                        return Err(SemanticsError::BadGroups { step, partitions: self.partitions });
                    }
                }
            }
            if seen.len() != self.partitions {
                return Err(SemanticsError::BadGroups { step, partitions: self.partitions });
            }
            groups.iter().find(|g| g.contains(&partition)).cloned().expect("partition is grouped")
        };
        let fault = |fault| SemanticsError::Fault { step, query: qid, fault };
        let expected = self.next_site(inst).map_err(fault)?;
        if expected != Some(site) {
            return Err(SemanticsError::ScheduleMismatch {
                step,
                query: qid,
                expected: expected
                    .map(|s| QueryInstanceId { txn: inst, site: s }.to_string())
                    .unwrap_or_else(|| "none (instance finished)".into()),
            });
        }
        let u = &self.unrolled[self.inst_txn[inst]];
        let s = &u.sites[site];
        let env = self.env(inst, &s.scope);
        let reads_used = u.site_used(site);
        if let QueryKind::Insert { values } = &s.query.kind {
            let table = self.schema.table(&s.query.table).expect("validated table");
            let mut key = Vec::new();
            for k in &table.primary_key {
                let e = &values.iter().find(|(f, _)| f == k).expect("insert covers key").1;
                key.push(eval_expr(e, &env, None).map_err(fault)?);
            }
            self.inserted.entry(table.name.clone()).or_default().insert(key);
        }
        let input = StepInput {
            schema: self.schema,
            query: &s.query,
            id: qid,
            partition,
            group: &group,
            env: &env,
            universe: &self.universe,
            step,
            reads_used,
        };
        let (effects, rows) = step_query(&mut self.state, &input).map_err(fault)?;
        if let Some(rows) = rows {
            self.results[inst].insert(site, rows);
        }
        self.cursor[inst] = site + 1;
        self.steps.push(StepRecord { query: qid, partition, effects });
        self.states.push(self.state.clone());
        Ok(())
    }

    /// The given instances must be finished with loop counts within bound.
    fn finish(&self, which: impl IntoIterator<Item = usize>) -> Result<(), SemanticsError> {
        for inst in which {
            let fault = |fault| SemanticsError::InstanceFault { instance: inst, fault };
            if let Some(site) = self.next_site(inst).map_err(fault)? {
                return Err(SemanticsError::Incomplete { instance: inst, site });
            }
            let u = &self.unrolled[self.inst_txn[inst]];
            for l in &u.loops {
                let env = self.env(inst, &l.scope);
                let mut reached = true;
                for g in &l.guards {
                    if !eval_bool(g, &env, None).map_err(fault)? {
                        reached = false;
                        break;
                    }
                }
                if reached {
                    let count = eval_expr(&l.count, &env, None).map_err(fault)?;
                    if count > self.bound as i64 {
                        return Err(SemanticsError::LoopBound { instance: inst, count, bound: self.bound });
                    }
                }
            }
        }
        Ok(())
    }

    fn into_history(self) -> History {
        let mut st_plus = BTreeMap::new();
        let mut ordinals = BTreeMap::new();
        for u in &self.unrolled {
            st_plus.insert(u.name.clone(), u.st_plus());
            ordinals.insert(u.name.clone(), u.sites.iter().map(|s| s.ordinal).collect());
        }
        History {
            states: self.states,
            steps: self.steps,
            instances: self.instances,
            st_plus,
            ordinals,
            init: self.init,
            unroll: self.bound,
        }
    }
}

fn init_universe(oracle: &ExecutionOracle) -> BTreeMap<String, BTreeSet<Vec<i64>>> {
    let mut u: BTreeMap<String, BTreeSet<Vec<i64>>> = BTreeMap::new();
    for r in &oracle.init {
        u.entry(r.table.clone()).or_default().insert(r.key.clone());
    }
    u
}

fn merge(mut a: BTreeMap<String, BTreeSet<Vec<i64>>>, b: &BTreeMap<String, BTreeSet<Vec<i64>>>) -> BTreeMap<String, BTreeSet<Vec<i64>>> {
    for (t, ks) in b {
        a.entry(t.clone()).or_default().extend(ks.iter().cloned());
    }
    a
}

/// Runs the oracle's schedule. The scan universe is the initial keys plus
/// every key inserted during the run, found by a first pass.
pub fn run(oracle: &ExecutionOracle, prog: &Program, schema: &Schema) -> Result<History, SemanticsError> {
    let drive = |universe| -> Result<Executor, SemanticsError> {
        let mut ex = Executor::new(oracle, prog, schema, universe)?;
        for st in &oracle.schedule {
            ex.exec(st.instance, st.site, st.partition, &st.groups)?;
        }
        ex.finish(0..oracle.instances.len())?;
        Ok(ex)
    };
    let first = drive(init_universe(oracle))?;
    let universe = merge(init_universe(oracle), &first.inserted);
    if universe == first.universe {
        return Ok(first.into_history());
    }
    Ok(drive(universe)?.into_history())
}

/// Runs whole instances one after another in `order` on a single fully
/// connected partition, ignoring the oracle's schedule.
pub fn run_serial(
    oracle: &ExecutionOracle,
    order: &[usize],
    prog: &Program,
    schema: &Schema,
) -> Result<History, SemanticsError> {
    let drive = |universe| -> Result<Executor, SemanticsError> {
        let mut single = oracle.clone();
        single.partitions = 1;
        let mut ex = Executor::new(&single, prog, schema, universe)?;
        for &inst in order {
            if inst >= ex.instances.len() {
                return Err(SemanticsError::UnknownInstance { step: ex.steps.len() + 1, instance: inst });
            }
            loop {
                let step = ex.steps.len() + 1;
                let site = ex.next_site(inst).map_err(|fault| SemanticsError::Fault {
                    step,
                    query: QueryInstanceId { txn: inst, site: ex.cursor[inst] },
                    fault,
                })?;
                match site {
                    Some(s) => ex.exec(inst, s, 0, &[])?,
                    None => break,
                }
            }
        }
        ex.finish(order.iter().copied())?;
        Ok(ex)
    };
    let first = drive(init_universe(oracle))?;
    let universe = merge(init_universe(oracle), &first.inserted);
    if universe == first.universe {
        return Ok(first.into_history());
    }
    Ok(drive(universe)?.into_history())
}

/// Sites an instance executes when run alone from the initial database.
pub fn instance_sites(
    oracle: &ExecutionOracle,
    instance: usize,
    prog: &Program,
    schema: &Schema,
) -> Result<Vec<usize>, SemanticsError> {
    let h = run_serial(oracle, &[instance], prog, schema)?;
    Ok(h.steps.iter().map(|s| s.query.site).collect())
}

#[cfg(test)]
mod tests;
