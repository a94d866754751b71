use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub type TxnInstanceId = usize;
pub type PartitionId = usize;

/// A query occurrence of a transaction instance: instance index and
/// unrolled site index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueryInstanceId {
    pub txn: TxnInstanceId,
    pub site: usize,
}

impl fmt::Display for QueryInstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ins{}-O{}", self.txn + 1, self.site + 1)
    }
}

/// Step index (0 is the initial database) and ordinal within the step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EffectId {
    pub step: usize,
    pub ord: usize,
}

impl fmt::Display for EffectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.step, self.ord)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EffectKind {
    Read,
    Write,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub id: EffectId,
    pub kind: EffectKind,
    pub table: String,
    pub key: Vec<i64>,
    pub field: String,
    pub value: Option<i64>,
    /// False marks an unused read (rd⁺).
    pub used: bool,
    /// None for the writes that make up the initial database.
    pub query: Option<QueryInstanceId>,
    pub txn: Option<TxnInstanceId>,
    pub partition: PartitionId,
}

impl Effect {
    pub fn same_cell(&self, o: &Effect) -> bool {
        self.table == o.table && self.key == o.key && self.field == o.field
    }
}

/// Store, arbitration and visibility over a growing effect universe.
/// Effects are addressed by their position in `effects`.
///
/// `store[p]` holds the effects created at partition `p` (the cells are
/// disjoint); `delivered[p]` additionally holds effects replicated to `p`
/// from its connected group, and is what a query at `p` observes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub effects: Vec<Effect>,
    pub store: Vec<BTreeSet<usize>>,
    pub delivered: Vec<BTreeSet<usize>>,
    /// Arbitration timestamp per effect; `ar(a,b)` iff `ar[a] < ar[b]`.
    pub ar: Vec<u64>,
    pub vis: BTreeSet<(usize, usize)>,
}

impl SystemState {
    pub fn new(partitions: usize) -> SystemState {
        let n = partitions.max(1);
        SystemState { store: vec![BTreeSet::new(); n], delivered: vec![BTreeSet::new(); n], ..Default::default() }
    }

    pub fn arb(&self, a: usize, b: usize) -> bool {
        self.ar[a] < self.ar[b]
    }

    pub fn visible(&self, a: usize, b: usize) -> bool {
        self.vis.contains(&(a, b))
    }

    /// Same transaction instance, different query instances.
    pub fn same_txn(&self, a: usize, b: usize) -> bool {
        let (x, y) = (&self.effects[a], &self.effects[b]);
        x.txn.is_some() && x.txn == y.txn && x.query != y.query
    }

    pub fn same_step(&self, a: usize, b: usize) -> bool {
        self.effects[a].id.step == self.effects[b].id.step
    }

    /// Well-formedness: store cells partition the effects, vis ⊆ ar, and
    /// both relations are irreflexive.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.effects.len();
        if self.ar.len() != n {
            return Err("ar does not cover every effect".into());
        }
        let mut seen: BTreeSet<u64> = BTreeSet::new();
        for t in &self.ar {
            if !seen.insert(*t) {
                return Err("ar is not injective".into());
            }
        }
        for &(a, b) in &self.vis {
            if a == b {
                return Err(format!("vis is reflexive on {}", self.effects[a].id));
            }
            if !self.arb(a, b) {
                return Err(format!("vis({},{}) without ar", self.effects[a].id, self.effects[b].id));
            }
        }
        let total: usize = self.store.iter().map(|s| s.len()).sum();
        let stored: BTreeSet<usize> = self.store.iter().flatten().copied().collect();
        if stored.len() != n || total != n {
            return Err("store cells do not partition the effects".into());
        }
        for (p, cell) in self.store.iter().enumerate() {
            if !cell.is_subset(&self.delivered[p]) {
                return Err(format!("partition {p} does not observe its own effects"));
            }
        }
        Ok(())
    }
}

/// Record key of a row: table name and primary-key values.
pub type RowKey = (String, Vec<i64>);

/// Database snapshot: row → field → value, including `alive`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalView {
    pub rows: BTreeMap<RowKey, BTreeMap<String, i64>>,
}

impl LocalView {
    /// Value of a field; unwritten cells read as 0, so unknown rows are dead.
    pub fn get(&self, table: &str, key: &[i64], field: &str) -> i64 {
        self.rows
            .get(&(table.to_string(), key.to_vec()))
            .and_then(|r| r.get(field))
            .copied()
            .unwrap_or(0)
    }

    pub fn alive(&self, table: &str, key: &[i64]) -> bool {
        self.get(table, key, super::ALIVE) == 1
    }
}
