//! Static detection of serializability anomalies in transactional programs
//! running on weakly consistent replicated stores.
//!
//! The pipeline parses a schema and a program, searches for bounded
//! dependency cycles with an SMT solver, turns every satisfying model into a
//! replayable test configuration and confirms it on a deterministic
//! simulator of a partitioned store.

pub mod consistency;
pub mod depgraph;
pub mod encoder;
pub mod model;
pub mod parser;
pub mod replay;
pub mod search;
pub mod semantics;

pub use consistency::Guarantee;
pub use depgraph::{Cycle, DepKind, DependencyGraph};
pub use model::{Program, Schema};
pub use search::{find_anomalies, AnomalyReport, SearchConfig, SearchOutcome};
