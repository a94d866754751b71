//! Dependency relations over effects, their lifting to query instances,
//! valid-cycle detection and a brute-force serializability oracle.

use crate::model::*;
use crate::semantics::{run_serial, ExecutionOracle, History, SemanticsError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DepKind {
    WR,
    WW,
    RW,
    ST,
    #[serde(rename = "ST+")]
    STPlus,
}

impl DepKind {
    pub fn is_dependency(self) -> bool {
        matches!(self, DepKind::WR | DepKind::WW | DepKind::RW)
    }

    pub fn parse(s: &str) -> Option<DepKind> {
        Some(match s {
            "WR" => DepKind::WR,
            "WW" => DepKind::WW,
            "RW" => DepKind::RW,
            "ST" => DepKind::ST,
            "ST+" => DepKind::STPlus,
            _ => return None,
        })
    }
}

impl fmt::Display for DepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DepKind::WR => "WR",
            DepKind::WW => "WW",
            DepKind::RW => "RW",
            DepKind::ST => "ST",
            DepKind::STPlus => "ST+",
        })
    }
}

/// The (record, field) a dependency is about.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Witness {
    pub table: String,
    pub key: Vec<i64>,
    pub field: String,
}

/// A dependency between two effects (indices into the state).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct EffectDep {
    pub from: usize,
    pub to: usize,
    pub kind: DepKind,
}

/// Latest write on the read's cell visible to it, by arbitration.
fn source_of(state: &SystemState, r: usize, writes: &[usize]) -> Option<usize> {
    writes.iter().copied().filter(|&w| state.visible(w, r)).max_by_key(|&w| state.ar[w])
}

fn writes_by_cell(state: &SystemState) -> BTreeMap<(&str, &[i64], &str), Vec<usize>> {
    let mut m: BTreeMap<(&str, &[i64], &str), Vec<usize>> = BTreeMap::new();
    for (i, e) in state.effects.iter().enumerate() {
        if e.kind == EffectKind::Write {
            m.entry((e.table.as_str(), e.key.as_slice(), e.field.as_str())).or_default().push(i);
        }
    }
    for ws in m.values_mut() {
        ws.sort_by_key(|&w| state.ar[w]);
    }
    m
}

/// WR: the read's source write when it carries the read value. WW: every
/// arbitration-ordered pair of writes on a cell. RW: the read against every
/// write arbitrated after its source (all writes when it has none).
pub fn effect_dependencies(state: &SystemState) -> Vec<EffectDep> {
    let cells = writes_by_cell(state);
    let mut out = Vec::new();
    for ws in cells.values() {
        for (i, &a) in ws.iter().enumerate() {
            for &b in &ws[i + 1..] {
                out.push(EffectDep { from: a, to: b, kind: DepKind::WW });
            }
        }
    }
    for (r, e) in state.effects.iter().enumerate() {
        if e.kind != EffectKind::Read {
            continue;
        }
        let empty = Vec::new();
        let ws = cells.get(&(e.table.as_str(), e.key.as_slice(), e.field.as_str())).unwrap_or(&empty);
        let src = source_of(state, r, ws);
        if let Some(w) = src {
            if state.effects[w].value == e.value {
                out.push(EffectDep { from: w, to: r, kind: DepKind::WR });
            }
        }
        for &w in ws {
            let after = match src {
                Some(s) => state.arb(s, w),
                None => true,
            };
            if after && w != r {
                out.push(EffectDep { from: r, to: w, kind: DepKind::RW });
            }
        }
    }
    out.sort();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: DepKind,
    pub witness: Option<Witness>,
}

/// Query instances of a history with dependency and same-transaction edges.
/// ST and ST+ edges are stored once with `from < to`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    pub nodes: Vec<QueryInstanceId>,
    /// Transaction name per node.
    pub txns: Vec<String>,
    pub edges: BTreeSet<Edge>,
}

impl DependencyGraph {
    pub fn node_index(&self, q: QueryInstanceId) -> Option<usize> {
        self.nodes.iter().position(|n| *n == q)
    }

    pub fn has_edge(&self, a: usize, b: usize, kind: DepKind) -> bool {
        let (a, b) = if kind.is_dependency() { (a, b) } else { (a.min(b), a.max(b)) };
        self.edges.iter().any(|e| e.from == a && e.to == b && e.kind == kind)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph deps {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "  n{i} [label=\"{n} {}\"];", self.txns[i]);
        }
        for e in &self.edges {
            let label = match &e.witness {
                Some(w) => format!("{} {}{:?}.{}", e.kind, w.table, w.key, w.field),
                None => e.kind.to_string(),
            };
            let style = if e.kind.is_dependency() { "" } else { ", dir=none, style=dashed" };
            let _ = writeln!(out, "  n{} -> n{} [label=\"{label}\"{style}];", e.from, e.to);
        }
        out.push_str("}\n");
        out
    }
}

/// Lifts effect dependencies to query instances. Dependencies inside one
/// transaction instance become ST; edges touching the initial database are
/// dropped; ST+ marks same-transaction pairs linked by dataflow.
pub fn lift_to_queries(h: &History, deps: &[EffectDep]) -> DependencyGraph {
    let st = h.final_state();
    let mut g = DependencyGraph::default();
    for s in &h.steps {
        if g.node_index(s.query).is_none() {
            g.nodes.push(s.query);
            g.txns.push(h.txn_name(s.query.txn).to_string());
        }
    }
    let index: BTreeMap<QueryInstanceId, usize> = g.nodes.iter().enumerate().map(|(i, q)| (*q, i)).collect();
    for d in deps {
        let (Some(qa), Some(qb)) = (st.effects[d.from].query, st.effects[d.to].query) else { continue };
        if qa == qb {
            continue;
        }
        let (a, b) = (index[&qa], index[&qb]);
        if qa.txn == qb.txn {
            g.edges.insert(Edge { from: a.min(b), to: a.max(b), kind: DepKind::ST, witness: None });
            continue;
        }
        let e = &st.effects[d.from];
        let witness = Witness { table: e.table.clone(), key: e.key.clone(), field: e.field.clone() };
        g.edges.insert(Edge { from: a, to: b, kind: d.kind, witness: Some(witness) });
    }
    for a in 0..g.nodes.len() {
        for b in a + 1..g.nodes.len() {
            let (qa, qb) = (g.nodes[a], g.nodes[b]);
            if qa.txn != qb.txn {
                continue;
            }
            g.edges.insert(Edge { from: a, to: b, kind: DepKind::ST, witness: None });
            let plus = h.st_plus.get(h.txn_name(qa.txn)).map(|m| m[qa.site][qb.site]).unwrap_or(false);
            if plus {
                g.edges.insert(Edge { from: a, to: b, kind: DepKind::STPlus, witness: None });
            }
        }
    }
    g
}

/// Dependency graph of a history's final state.
pub fn dependency_graph(h: &History) -> DependencyGraph {
    lift_to_queries(h, &effect_dependencies(h.final_state()))
}

/// One edge of a cycle, leaving `from` towards the next node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CycleEdge {
    pub from: QueryInstanceId,
    pub txn: String,
    pub site: usize,
    pub kind: DepKind,
    pub witness: Option<Witness>,
}

/// A valid cycle. ST edges are recorded as `ST`; `internal` holds when every
/// ST edge on the cycle is also ST+.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub edges: Vec<CycleEdge>,
    pub internal: bool,
}

/// Transaction type, site and edge kind of one cycle position.
pub type KeyItem = (String, usize, DepKind);
/// A key item refined with the witness field of dependency edges.
pub type SigItem = (String, usize, DepKind, Option<String>);

fn min_rotation<T: Ord + Clone>(items: &[T]) -> Vec<T> {
    (0..items.len().max(1))
        .map(|r| items.iter().cycle().skip(r).take(items.len()).cloned().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Rotation-minimal sequence of (transaction type, site, edge kind).
    pub fn key(&self) -> Vec<KeyItem> {
        let items: Vec<KeyItem> = self.edges.iter().map(|e| (e.txn.clone(), e.site, e.kind)).collect();
        min_rotation(&items)
    }

    /// Rotation-minimal key refined with witness fields.
    pub fn signature(&self) -> Vec<SigItem> {
        let items: Vec<SigItem> = self
            .edges
            .iter()
            .map(|e| (e.txn.clone(), e.site, e.kind, e.witness.as_ref().map(|w| w.field.clone())))
            .collect();
        min_rotation(&items)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_of(&self.key())
    }

    /// Edge kinds along the rotation-minimal key, e.g. `WR->ST->RW->ST`.
    pub fn kinds(&self) -> Vec<DepKind> {
        self.key().iter().map(|k| k.2).collect()
    }

    /// Number of distinct transaction instances on the cycle.
    pub fn txn_count(&self) -> usize {
        self.edges.iter().map(|e| e.from.txn).collect::<BTreeSet<_>>().len()
    }
}

/// Renders a key as `txn.O1 -WR-> txn.O2 -ST- ...`.
pub fn fingerprint_of(key: &[KeyItem]) -> String {
    let mut out = String::new();
    for (t, site, kind) in key {
        let arrow = if kind.is_dependency() { format!(" -{kind}-> ") } else { format!(" -{kind}- ") };
        let _ = write!(out, "{t}.O{}{arrow}", site + 1);
    }
    out.trim_end().to_string()
}

/// Whether a cyclic sequence of edge kinds is a valid cycle shape.
pub fn valid_kinds(kinds: &[DepKind]) -> bool {
    let n = kinds.len();
    let deps = kinds.iter().filter(|k| k.is_dependency()).count();
    n >= 3
        && deps >= 2
        && deps < n
        && (0..n).all(|i| kinds[i].is_dependency() || kinds[(i + 1) % n].is_dependency())
}

/// Every valid simple cycle of at most `max_len` edges, sorted by key. In
/// internal mode every ST edge must be ST+.
pub fn find_cycles(g: &DependencyGraph, max_len: usize, internal_only: bool) -> Vec<Cycle> {
    let n = g.nodes.len();
    let mut adj: Vec<Vec<(usize, DepKind, Option<Witness>)>> = vec![Vec::new(); n];
    let mut seen_dep: BTreeSet<(usize, usize, DepKind, String)> = BTreeSet::new();
    let plus: BTreeSet<(usize, usize)> =
        g.edges.iter().filter(|e| e.kind == DepKind::STPlus).map(|e| (e.from, e.to)).collect();
    for e in &g.edges {
        match e.kind {
            DepKind::ST => {
                if !internal_only || plus.contains(&(e.from, e.to)) {
                    adj[e.from].push((e.to, DepKind::ST, None));
                    adj[e.to].push((e.from, DepKind::ST, None));
                }
            }
            DepKind::STPlus => {}
            k => {
                let field = e.witness.as_ref().map(|w| w.field.clone()).unwrap_or_default();
                if seen_dep.insert((e.from, e.to, k, field)) {
                    adj[e.from].push((e.to, k, e.witness.clone()));
                }
            }
        }
    }
    let mut found: BTreeMap<(Vec<SigItem>, Vec<QueryInstanceId>), Cycle> = BTreeMap::new();
    let mut path: Vec<(usize, DepKind, Option<Witness>)> = Vec::new();
    for s in 0..n {
        search(g, &adj, s, s, max_len, &plus, &mut path, &mut found);
    }
    let mut out: Vec<Cycle> = found.into_values().collect();
    out.sort_by(|a, b| (a.key(), a.signature()).cmp(&(b.key(), b.signature())));
    out
}

#[allow(clippy::too_many_arguments)]
fn search(
    g: &DependencyGraph,
    adj: &[Vec<(usize, DepKind, Option<Witness>)>],
    start: usize,
    u: usize,
    max_len: usize,
    plus: &BTreeSet<(usize, usize)>,
    path: &mut Vec<(usize, DepKind, Option<Witness>)>,
    found: &mut BTreeMap<(Vec<SigItem>, Vec<QueryInstanceId>), Cycle>,
) {
    for (v, kind, w) in &adj[u] {
        if let Some((_, last, _)) = path.last() {
            if *last == DepKind::ST && *kind == DepKind::ST {
                continue;
            }
        }
        path.push((u, *kind, w.clone()));
        if *v == start {
            let kinds: Vec<DepKind> = path.iter().map(|p| p.1).collect();
            if path.len() <= max_len && valid_kinds(&kinds) {
                let edges: Vec<CycleEdge> = path
                    .iter()
                    .map(|(x, k, w)| CycleEdge {
                        from: g.nodes[*x],
                        txn: g.txns[*x].clone(),
                        site: g.nodes[*x].site,
                        kind: *k,
                        witness: w.clone(),
                    })
                    .collect();
                let internal = path.iter().enumerate().all(|(i, (x, k, _))| {
                    let y = if i + 1 < path.len() { path[i + 1].0 } else { start };
                    *k != DepKind::ST || plus.contains(&((*x).min(y), (*x).max(y)))
                });
                let c = Cycle { edges, internal };
                let nodes: Vec<QueryInstanceId> = path.iter().map(|p| g.nodes[p.0]).collect();
                found.entry((c.signature(), nodes)).or_insert(c);
            }
        } else if *v > start && path.len() < max_len && !path.iter().any(|p| p.0 == *v) {
            search(g, adj, start, *v, max_len, plus, path, found);
        }
        path.pop();
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("history has {0} transaction instances; the oracle handles at most {MAX_ORACLE_INSTANCES}")]
    TooLarge(usize),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

pub const MAX_ORACLE_INSTANCES: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleVerdict {
    pub serializable: bool,
    /// Instance order of an equivalent serial execution.
    pub witness: Option<Vec<usize>>,
}

/// Effect identity up to renaming: instance, site, kind, cell and version.
/// A write's version is its rank among the cell's writes in arbitration
/// order; a read's version is that of its source write (0 without one).
type EffectSig = (usize, usize, EffectKind, String, Vec<i64>, String, usize);

fn versioned_effects(state: &SystemState) -> BTreeMap<EffectSig, usize> {
    let cells = writes_by_cell(state);
    let mut rank = vec![0usize; state.effects.len()];
    for ws in cells.values() {
        for (i, &w) in ws.iter().enumerate() {
            rank[w] = i + 1;
        }
    }
    let mut out = BTreeMap::new();
    for (i, e) in state.effects.iter().enumerate() {
        let Some(q) = e.query else { continue };
        let version = match e.kind {
            EffectKind::Write => rank[i],
            EffectKind::Read => {
                let empty = Vec::new();
                let ws = cells.get(&(e.table.as_str(), e.key.as_slice(), e.field.as_str())).unwrap_or(&empty);
                source_of(state, i, ws).map(|w| rank[w]).unwrap_or(0)
            }
        };
        let sig = (q.txn, q.site, e.kind, e.table.clone(), e.key.clone(), e.field.clone(), version);
        *out.entry(sig).or_insert(0) += 1;
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                go(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// True iff some strictly serial execution of the same instances on one
/// connected partition yields the same effects up to renaming.
pub fn serializability_oracle(h: &History, prog: &Program, schema: &Schema) -> Result<OracleVerdict, OracleError> {
    let n = h.instances.len();
    if n > MAX_ORACLE_INSTANCES {
        return Err(OracleError::TooLarge(n));
    }
    let target = versioned_effects(h.final_state());
    let oracle = ExecutionOracle {
        partitions: 1,
        unroll: h.unroll,
        instances: h.instances.clone(),
        schedule: vec![],
        init: h.init.clone(),
    };
    for order in permutations(n) {
        let serial = match run_serial(&oracle, &order, prog, schema) {
            Ok(s) => s,
            Err(SemanticsError::Fault { .. }) | Err(SemanticsError::LoopBound { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        if versioned_effects(serial.final_state()) == target {
            return Ok(OracleVerdict { serializable: true, witness: Some(order) });
        }
    }
    Ok(OracleVerdict { serializable: false, witness: None })
}
