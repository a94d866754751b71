//! Reading executions and cycles back from solver models.

use super::sexpr::Value;
use super::{Problem, EDGE_KINDS};
use crate::depgraph::{Cycle, CycleEdge, DepKind, Witness};
use crate::model::QueryInstanceId;
use crate::semantics::InitRow;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("model lacks a value for `{0}`")]
    Missing(String),
    #[error("model is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodedInstance {
    pub txn: String,
    pub args: Vec<i64>,
    /// Abstract values keyed by unrolled label.
    pub abs: BTreeMap<String, i64>,
    /// Belongs to the serial prefix.
    pub serial: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodedStep {
    pub instance: usize,
    pub site: usize,
    pub ts: i64,
    pub partition: usize,
    /// Partitions the step's effects replicate to.
    pub replicas: Vec<usize>,
}

/// One execution and the cycle it exhibits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodedModel {
    pub partitions: usize,
    pub unroll: usize,
    pub instances: Vec<DecodedInstance>,
    /// Executed queries in timestamp order.
    pub steps: Vec<DecodedStep>,
    pub init: Vec<InitRow>,
    pub cycle: Cycle,
}

struct Model<'m>(&'m BTreeMap<String, Value>);

impl Model<'_> {
    fn bool(&self, name: &str) -> Result<bool, DecodeError> {
        match self.0.get(name) {
            Some(Value::Bool(b)) => Ok(*b),
            _ => Err(DecodeError::Missing(name.into())),
        }
    }

    fn int(&self, name: &str) -> Result<i64, DecodeError> {
        match self.0.get(name) {
            Some(Value::Int(n)) => Ok(*n),
            _ => Err(DecodeError::Missing(name.into())),
        }
    }

    fn which(&self, names: impl IntoIterator<Item = String>) -> Result<usize, DecodeError> {
        let names: Vec<String> = names.into_iter().collect();
        let mut hit = None;
        for (i, n) in names.iter().enumerate() {
            if self.bool(n)? {
                if hit.is_some() {
                    return Err(DecodeError::Inconsistent(format!("two of {names:?} hold")));
                }
                hit = Some(i);
            }
        }
        hit.ok_or_else(|| DecodeError::Inconsistent(format!("none of {names:?} holds")))
    }
}

impl Problem {
    pub fn decode(&self, values: &BTreeMap<String, Value>) -> Result<DecodedModel, DecodeError> {
        let m = Model(values);
        let slots = self.slots();
        let types = self.txn_names.len();
        let mut slot_type = Vec::new();
        for s in 0..slots {
            slot_type.push(m.which((0..types).map(|t| format!("ty_{s}_{t}")))?);
        }
        let mut reached = Vec::new();
        for n in 0..self.nodes.len() {
            if m.bool(&format!("reach_{n}"))? {
                reached.push((m.int(&format!("ts_{n}"))?, n));
            }
        }
        reached.sort();
        // Instances are labeled by the first step they execute.
        let mut order: Vec<usize> = Vec::new();
        for &(_, n) in &reached {
            let s = self.nodes[n].slot;
            if !order.contains(&s) {
                order.push(s);
            }
        }
        for s in 0..slots {
            if !order.contains(&s) {
                order.push(s);
            }
        }
        let label: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut instances = Vec::new();
        for &s in &order {
            let t = slot_type[s];
            let args = (0..self.params[t].len())
                .map(|a| m.int(&format!("arg_{s}_{t}_{a}")))
                .collect::<Result<Vec<_>, _>>()?;
            let mut abs = BTreeMap::new();
            for (k, l) in self.abs_labels[t].iter().enumerate() {
                abs.insert(l.clone(), m.int(&format!("abs_{s}_{t}_{k}"))?);
            }
            instances.push(DecodedInstance {
                txn: self.txn_names[t].clone(),
                args,
                abs,
                serial: !self.is_cycle_slot(s),
            });
        }
        let mut steps = Vec::new();
        for &(ts, n) in &reached {
            let info = self.nodes[n];
            if slot_type[info.slot] != info.txn {
                return Err(DecodeError::Inconsistent(format!("node {n} reached in a slot of another type")));
            }
            let mut replicas = Vec::new();
            for p in 0..self.partitions {
                if m.bool(&format!("mem_{n}_{p}"))? {
                    replicas.push(p);
                }
            }
            let partition = m.int(&format!("tau_{n}"))? as usize;
            steps.push(DecodedStep { instance: label[&info.slot], site: info.site, ts, partition, replicas });
        }
        let mut init = Vec::new();
        let mut keys: BTreeMap<(usize, usize), Vec<i64>> = BTreeMap::new();
        for (t, table) in self.tables.iter().enumerate() {
            for r in 0..self.records {
                let key = (0..table.primary_key.len())
                    .map(|j| m.int(&format!("key_{t}_{r}_{j}")))
                    .collect::<Result<Vec<_>, _>>()?;
                keys.insert((t, r), key.clone());
                if !m.bool(&format!("ialive_{t}_{r}"))? {
                    continue;
                }
                let mut values = BTreeMap::new();
                for (f, name) in table.fields.iter().enumerate() {
                    values.insert(name.clone(), m.int(&format!("init_{t}_{r}_{f}"))?);
                }
                values.insert(crate::model::ALIVE.to_string(), 1);
                init.push(InitRow { table: table.name.clone(), key, values });
            }
        }
        let k = self.bounds.len;
        let cyc: Vec<usize> = self.cycle_nodes().collect();
        let mut at = Vec::new();
        for i in 0..k {
            at.push(cyc[m.which(cyc.iter().map(|n| format!("cyc_{i}_{n}")))?]);
        }
        let mut edges = Vec::new();
        let mut internal = true;
        for i in 0..k {
            let n = at[i];
            let info = self.nodes[n];
            let kind = EDGE_KINDS[m.which(EDGE_KINDS.iter().map(|kd| format!("ek_{i}_{}", super::kind_tag(*kd))))?];
            let witness = if kind.is_dependency() {
                let c = m.which((0..self.cells.len()).map(|c| format!("ef_{i}_{c}")))?;
                let r = m.which((0..self.records).map(|r| format!("ew_{i}_{r}")))?;
                let (t, f) = self.cells[c];
                Some(Witness {
                    table: self.tables[t].name.clone(),
                    key: keys[&(t, r)].clone(),
                    field: self.tables[t].all_fields()[f].clone(),
                })
            } else {
                let next = self.nodes[at[(i + 1) % k]];
                internal &= self.st_plus[info.txn][info.site][next.site];
                None
            };
            edges.push(CycleEdge {
                from: QueryInstanceId { txn: label[&info.slot], site: info.site },
                txn: self.txn_names[info.txn].clone(),
                site: info.site,
                kind,
                witness,
            });
        }
        debug_assert!(edges.iter().all(|e| e.kind != DepKind::STPlus));
        Ok(DecodedModel {
            partitions: self.partitions,
            unroll: self.unroll,
            instances,
            steps,
            init,
            cycle: Cycle { edges, internal },
        })
    }
}
