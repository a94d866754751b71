//! Consistency and isolation guarantees as predicates over system states.
//!
//! ST relates effects of different queries of one transaction instance. In
//! RC and RR the third effect ranges over other transaction instances, and
//! LIN and CC ignore pairs created by the same step (those are ordered by
//! arbitration but can never see each other).

use crate::model::{EffectId, SystemState};
use crate::semantics::History;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A conjunction of guarantees. All flags false is EC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Guarantee {
    pub cv: bool,
    pub cc: bool,
    pub rc: bool,
    pub rr: bool,
    pub lin: bool,
}

impl Guarantee {
    pub const EC: Guarantee = Guarantee { cv: false, cc: false, rc: false, rr: false, lin: false };
    pub const CV: Guarantee = Guarantee { cv: true, ..Guarantee::EC };
    pub const CC: Guarantee = Guarantee { cv: true, cc: true, ..Guarantee::EC };
    pub const RC: Guarantee = Guarantee { rc: true, ..Guarantee::EC };
    pub const RR: Guarantee = Guarantee { rr: true, ..Guarantee::EC };
    pub const LIN: Guarantee = Guarantee { lin: true, ..Guarantee::EC };
    pub const SER: Guarantee = Guarantee { rc: true, rr: true, lin: true, ..Guarantee::EC };

    pub fn and(self, o: Guarantee) -> Guarantee {
        Guarantee {
            cv: self.cv || o.cv,
            cc: self.cc || o.cc,
            rc: self.rc || o.rc,
            rr: self.rr || o.rr,
            lin: self.lin || o.lin,
        }
    }

    pub fn is_ser(&self) -> bool {
        self.rc && self.rr && self.lin
    }

    pub fn is_ec(&self) -> bool {
        *self == Guarantee::EC
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown guarantee `{0}` (expected ec, cv, cc, rc, rr, lin or ser, joined by `+`)")]
pub struct UnknownGuarantee(pub String);

impl FromStr for Guarantee {
    type Err = UnknownGuarantee;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut g = Guarantee::EC;
        for part in s.split('+') {
            let one = match part.trim().to_ascii_lowercase().as_str() {
                "ec" => Guarantee::EC,
                "cv" => Guarantee::CV,
                "cc" => Guarantee::CC,
                "rc" => Guarantee::RC,
                "rr" => Guarantee::RR,
                "lin" => Guarantee::LIN,
                "ser" => Guarantee::SER,
                _ => return Err(UnknownGuarantee(part.to_string())),
            };
            g = g.and(one);
        }
        Ok(g)
    }
}

impl fmt::Display for Guarantee {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.is_ser() {
            parts.push("ser");
        } else {
            if self.rc {
                parts.push("rc");
            }
            if self.rr {
                parts.push("rr");
            }
            if self.lin {
                parts.push("lin");
            }
        }
        if self.cc {
            parts.push("cc");
        } else if self.cv {
            parts.push("cv");
        }
        if parts.is_empty() {
            parts.push("ec");
        }
        write!(f, "{}", parts.join("+"))
    }
}

/// A failed guarantee with the offending effects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub property: &'static str,
    pub effects: Vec<EffectId>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.effects.iter().map(|e| e.to_string()).collect();
        write!(f, "{} violated by effects {}", self.property, ids.join(", "))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error("history has no states")]
    EmptyHistory,
    #[error("{0}")]
    Violated(Violation),
}

fn other_txn(s: &SystemState, a: usize, b: usize) -> bool {
    s.effects[a].txn.is_none() || s.effects[a].txn != s.effects[b].txn
}

/// Evaluates `g` on `state` by enumeration.
pub fn check_state(state: &SystemState, g: &Guarantee) -> Result<(), Violation> {
    let n = state.effects.len();
    let ids = |v: &[usize]| v.iter().map(|&i| state.effects[i].id).collect::<Vec<_>>();
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut pred: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(a, b) in &state.vis {
        succ[a].insert(b);
        pred[b].insert(a);
    }
    let st_pairs = || {
        (0..n).flat_map(move |a| (0..n).filter(move |&b| a != b && state.same_txn(a, b)).map(move |b| (a, b)))
    };
    if g.cv || g.cc {
        for a in 0..n {
            for &b in &succ[a] {
                for &c in &succ[b] {
                    if !succ[a].contains(&c) {
                        return Err(Violation { property: "cv", effects: ids(&[a, b, c]) });
                    }
                }
            }
        }
    }
    if g.cc {
        for (a, b) in st_pairs() {
            if !state.same_step(a, b) && !state.visible(a, b) && !state.visible(b, a) {
                return Err(Violation { property: "cc", effects: ids(&[a, b]) });
            }
        }
    }
    if g.rc {
        for (a, b) in st_pairs() {
            for &c in &succ[a] {
                if other_txn(state, a, c) && !state.visible(b, c) {
                    return Err(Violation { property: "rc", effects: ids(&[a, b, c]) });
                }
            }
        }
    }
    if g.rr {
        for (a, b) in st_pairs() {
            for &c in &pred[a] {
                if other_txn(state, c, a) && !state.visible(c, b) {
                    return Err(Violation { property: "rr", effects: ids(&[a, b, c]) });
                }
            }
        }
    }
    if g.lin {
        for a in 0..n {
            for b in 0..n {
                if a != b && state.arb(a, b) && !state.same_step(a, b) && !state.visible(a, b) {
                    return Err(Violation { property: "lin", effects: ids(&[a, b]) });
                }
            }
        }
    }
    Ok(())
}

/// Relations only grow along a history, so the final state decides.
pub fn check_history(h: &History, g: &Guarantee) -> Result<(), CheckError> {
    let last = h.states.last().ok_or(CheckError::EmptyHistory)?;
    check_state(last, g).map_err(CheckError::Violated)
}
