//! Iterative anomaly search over growing bounds.
//!
//! For each number of concurrent transactions and each cycle length the
//! base problem is queried repeatedly, every found cycle being blocked for
//! later queries. After a hit the inner loop pins the transaction types and
//! edge kinds of the hit and enumerates its variants first. Each distinct
//! cycle is then re-solved with a serial prefix and the user's assumptions
//! on the initial database, normalized towards a simple schedule, turned
//! into a test configuration and replayed.

use crate::depgraph::{Cycle, DepKind, SigItem};
use crate::encoder::sexpr::Value;
use crate::encoder::solver::{Solver, SolverError, Verdict as SolverVerdict};
use crate::encoder::{Assumption, Bounds, DecodeError, DecodedModel, EncodeError, Encoder, EncoderConfig, Problem};
use crate::model::{Program, Schema};
use crate::replay::{replay, to_config, verify, TestConfiguration};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub encoder: EncoderConfig,
    /// Largest serial prefix tried when building a test configuration.
    pub max_p: usize,
    /// Largest number of concurrent transactions.
    pub max_t: usize,
    /// Largest cycle length.
    pub max_c: usize,
    /// Wall-clock budget for the whole search.
    pub budget: Duration,
    pub assumptions: Vec<Assumption>,
    pub inner_loop: bool,
    /// Simplify each model (fewer records, no partitioning, round-robin
    /// schedule) before building its configuration.
    pub normalize: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            encoder: EncoderConfig::default(),
            max_p: 1,
            max_t: 2,
            max_c: 4,
            budget: Duration::from_secs(120),
            assumptions: Vec::new(),
            inner_loop: true,
            normalize: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// One distinct anomaly.
#[derive(Clone, Debug, Serialize)]
pub struct AnomalyReport {
    pub id: usize,
    pub fingerprint: String,
    pub kinds: String,
    pub internal: bool,
    pub txns: usize,
    pub len: usize,
    /// Serial prefix length of the configuration.
    pub serial: usize,
    /// The configuration satisfies the assumptions.
    pub replayable: bool,
    /// Replay verdict label, or the replay error.
    pub verdict: String,
    pub confirmed: bool,
    /// Seconds since the search started.
    pub found_at: f64,
    pub cycle: Cycle,
    pub model: DecodedModel,
    pub config: TestConfiguration,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchOutcome {
    pub reports: Vec<AnomalyReport>,
    /// The budget ran out before every bound was explored.
    pub truncated: bool,
    /// Bounds at which the solver gave up.
    pub undetermined: Vec<Bounds>,
    pub queries: usize,
    pub elapsed: f64,
}

impl SearchOutcome {
    /// Human-readable table of the reports.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        if self.reports.is_empty() {
            let _ = writeln!(s, "no anomalies found");
        } else {
            let _ = writeln!(s, "{:>3}  {:<9} {:>2}  {:<16} {:<8} cycle", "id", "class", "p", "verdict", "time");
            for r in &self.reports {
                let class = if r.internal { "internal" } else { "external" };
                let _ = writeln!(
                    s,
                    "{:>3}  {:<9} {:>2}  {:<16} {:<8} {}",
                    r.id,
                    class,
                    r.serial,
                    r.verdict,
                    format!("{:.2}s", r.found_at),
                    r.fingerprint
                );
            }
        }
        let _ = write!(
            s,
            "{} anomalies, {} solver queries, {:.2}s",
            self.reports.len(),
            self.queries,
            self.elapsed
        );
        if self.truncated {
            s.push_str(", budget exhausted");
        }
        if !self.undetermined.is_empty() {
            let _ = write!(s, ", {} bounds undetermined", self.undetermined.len());
        }
        s.push('\n');
        s
    }
}

struct Search<'a> {
    cfg: &'a SearchConfig,
    prog: &'a Program,
    schema: &'a Schema,
    enc: Encoder<'a>,
    solver: &'a Solver,
    start: Instant,
    deadline: Instant,
    problems: BTreeMap<(usize, usize, usize, bool), Problem>,
    found: Vec<Vec<SigItem>>,
    seen: BTreeSet<Vec<SigItem>>,
    reports: Vec<AnomalyReport>,
    queries: usize,
    truncated: bool,
}

enum Answer {
    Sat(BTreeMap<String, Value>),
    Unsat,
    Unknown,
}

impl<'a> Search<'a> {
    fn problem(&mut self, bounds: Bounds, assumed: bool) -> Result<Problem, SearchError> {
        let key = (bounds.serial, bounds.txns, bounds.len, assumed);
        if !self.problems.contains_key(&key) {
            let assumptions: &[Assumption] = if assumed { &self.cfg.assumptions } else { &[] };
            let p = self.enc.encode(bounds, assumptions)?;
            self.problems.insert(key, p);
        }
        Ok(self.problems[&key].clone())
    }

    fn ask(&mut self, p: &Problem, extra: &[String], values: bool) -> Result<Answer, SearchError> {
        let now = Instant::now();
        if now >= self.deadline {
            self.truncated = true;
            return Ok(Answer::Unknown);
        }
        let solver = Solver { path: self.solver.path.clone(), timeout: self.deadline - now };
        self.queries += 1;
        let names = if values { p.model_names() } else { Vec::new() };
        Ok(match solver.check(&p.with(extra), &names)? {
            SolverVerdict::Sat(m) => Answer::Sat(m),
            SolverVerdict::Unsat => Answer::Unsat,
            SolverVerdict::Unknown(_) => {
                if Instant::now() >= self.deadline {
                    self.truncated = true;
                }
                Answer::Unknown
            }
        })
    }

    /// Queries `p` until no unblocked cycle remains. Returns false when
    /// the solver gave up.
    fn enumerate(&mut self, p: &Problem, pin: Option<String>) -> Result<bool, SearchError> {
        loop {
            let mut extra = vec![p.block(&self.found)];
            extra.extend(pin.clone());
            match self.ask(p, &extra, true)? {
                Answer::Sat(m) => {
                    let model = p.decode(&m)?;
                    let sig = model.cycle.signature();
                    if !self.seen.insert(sig.clone()) {
                        return Err(SearchError::Decode(DecodeError::Inconsistent(format!(
                            "blocked cycle {} returned again",
                            model.cycle.fingerprint()
                        ))));
                    }
                    self.found.push(sig.clone());
                    self.report(p.bounds, model)?;
                    if self.cfg.inner_loop && pin.is_none() {
                        let structure: Vec<(String, DepKind)> =
                            sig.iter().map(|(t, _, k, _)| (t.clone(), *k)).collect();
                        if !self.enumerate(p, Some(p.pin_structure(&structure)))? {
                            return Ok(false);
                        }
                    }
                }
                Answer::Unsat => return Ok(true),
                Answer::Unknown => return Ok(false),
            }
        }
    }

    /// Re-solves the cycle with a serial prefix under the assumptions and
    /// builds its report.
    fn report(&mut self, bounds: Bounds, outer: DecodedModel) -> Result<(), SearchError> {
        let found_at = self.start.elapsed().as_secs_f64();
        let sig = outer.cycle.signature();
        let mut chosen = None;
        for serial in 0..=self.cfg.max_p {
            let p = self.problem(Bounds { serial, ..bounds }, true)?;
            let mut extra = vec![p.cycle_matches(&sig)];
            if let Answer::Sat(m) = self.ask(&p, &extra, true)? {
                let mut model = p.decode(&m)?;
                if self.cfg.normalize {
                    model = self.normalize(&p, &mut extra, model)?;
                }
                chosen = Some((serial, model));
                break;
            }
        }
        let replayable = chosen.is_some();
        let (serial, model) = chosen.unwrap_or((0, outer));
        let config = to_config(&model);
        let verdict = match replay(&config, self.prog, self.schema) {
            Ok(h) => verify(&h, &model.cycle).label().to_string(),
            Err(e) => format!("replay-error: {e}"),
        };
        let cycle = model.cycle.clone();
        self.reports.push(AnomalyReport {
            id: self.reports.len() + 1,
            fingerprint: cycle.fingerprint(),
            kinds: cycle.kinds().iter().map(|k| k.to_string()).collect::<Vec<_>>().join("->"),
            internal: cycle.internal,
            txns: bounds.txns,
            len: cycle.len(),
            serial,
            replayable,
            confirmed: verdict == "confirmed",
            verdict,
            found_at,
            cycle,
            model,
            config,
        });
        Ok(())
    }

    fn normalize(&mut self, p: &Problem, extra: &mut Vec<String>, mut model: DecodedModel) -> Result<DecodedModel, SearchError> {
        let mut passes = Vec::new();
        for t in 0..p.tables.len() {
            for r in 0..p.records {
                passes.push(p.dead_record(t, r));
            }
        }
        passes.push(p.fully_connected());
        passes.push(p.round_robin());
        for pass in passes {
            extra.push(pass);
            match self.ask(p, extra, true)? {
                Answer::Sat(m) => model = p.decode(&m)?,
                _ => {
                    extra.pop();
                }
            }
        }
        Ok(model)
    }
}

/// Searches for anomalies within the configured bounds.
pub fn find_anomalies(
    prog: &Program,
    schema: &Schema,
    cfg: &SearchConfig,
    solver: &Solver,
) -> Result<SearchOutcome, SearchError> {
    let start = Instant::now();
    let mut s = Search {
        cfg,
        prog,
        schema,
        enc: Encoder::new(prog, schema, cfg.encoder.clone())?,
        solver,
        start,
        deadline: start + cfg.budget,
        problems: BTreeMap::new(),
        found: Vec::new(),
        seen: BTreeSet::new(),
        reports: Vec::new(),
        queries: 0,
        truncated: false,
    };
    let mut undetermined = Vec::new();
    'outer: for txns in 2..=cfg.max_t {
        for len in 3..=cfg.max_c {
            let bounds = Bounds { serial: 0, txns, len };
            let p = s.problem(bounds, false)?;
            if !s.enumerate(&p, None)? {
                if s.truncated {
                    break 'outer;
                }
                undetermined.push(bounds);
            }
        }
    }
    Ok(SearchOutcome {
        reports: s.reports,
        truncated: s.truncated,
        undetermined,
        queries: s.queries,
        elapsed: start.elapsed().as_secs_f64(),
    })
}
