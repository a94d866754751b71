//! Test configurations: building them from models, the `.conf` text
//! format, deterministic replay and cycle confirmation.
//!
//! ```text
//! # initialize:
//! INSERT INTO
//!   CUST(c_id,c_pay_cnt)
//!   VALUES (10,50);
//! # schedule:
//! @T1@partitions{A,B}: Ins1-O1
//! @T2@partitions{A}{B}: Ins2-O1
//! # instances:
//! Ins1: payment(10)
//! Ins2: payment(10) abs_0=3
//! ```
//!
//! Each schedule line lists the connected partition groups; the first
//! partition of the first group executes the query.

use crate::depgraph::{dependency_graph, find_cycles, Cycle};
use crate::encoder::DecodedModel;
use crate::model::{Program, Schema, ALIVE};
use crate::semantics::{run, ExecutionOracle, History, InitRow, Instance, ScheduleStep, SemanticsError};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write;
use thiserror::Error;

/// Everything needed to replay an execution deterministically.
pub type TestConfiguration = ExecutionOracle;

/// Turns a decoded model into a replayable configuration.
pub fn to_config(m: &DecodedModel) -> TestConfiguration {
    let instances = m
        .instances
        .iter()
        .map(|i| Instance { txn: i.txn.clone(), args: i.args.clone(), abs: i.abs.clone() })
        .collect();
    let schedule = m
        .steps
        .iter()
        .map(|s| {
            let groups = if s.replicas.len() == m.partitions {
                Vec::new()
            } else {
                let mut own = vec![s.partition];
                own.extend(s.replicas.iter().copied().filter(|&p| p != s.partition));
                let rest: Vec<usize> = (0..m.partitions).filter(|p| !s.replicas.contains(p)).collect();
                vec![own, rest]
            };
            ScheduleStep { instance: s.instance, site: s.site, partition: s.partition, groups }
        })
        .collect();
    ExecutionOracle { partitions: m.partitions, unroll: m.unroll, instances, schedule, init: m.init.clone() }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("configuration has an empty schedule")]
    EmptySchedule,
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("table `{table}`: {message}")]
    BadRow { table: String, message: String },
    #[error("schedule names instance Ins{0}, which is not declared")]
    UnknownInstance(usize),
    #[error("at most 26 partitions can be written")]
    TooManyPartitions,
}

fn letter(p: usize) -> Result<char, ConfError> {
    if p < 26 {
        Ok((b'A' + p as u8) as char)
    } else {
        Err(ConfError::TooManyPartitions)
    }
}

/// Renders a configuration in the `.conf` format.
pub fn write_conf(cfg: &TestConfiguration, schema: &Schema) -> Result<String, ConfError> {
    let mut out = String::from("# initialize:\n");
    for row in &cfg.init {
        let table = schema.table(&row.table).ok_or_else(|| ConfError::UnknownTable(row.table.clone()))?;
        let mut vals = Vec::new();
        for f in &table.fields {
            let v = row.values.get(f).ok_or_else(|| ConfError::BadRow {
                table: row.table.clone(),
                message: format!("missing field `{f}`"),
            })?;
            vals.push(v.to_string());
        }
        let _ = writeln!(
            out,
            "INSERT INTO\n  {}({})\n  VALUES ({});",
            table.name.to_uppercase(),
            table.fields.join(","),
            vals.join(",")
        );
    }
    out.push_str("# schedule:\n");
    for (i, s) in cfg.schedule.iter().enumerate() {
        let groups: Vec<Vec<usize>> = if s.groups.is_empty() {
            let mut all = vec![s.partition];
            all.extend((0..cfg.partitions).filter(|&p| p != s.partition));
            vec![all]
        } else {
            s.groups.clone()
        };
        let mut g = String::new();
        for grp in &groups {
            let letters = grp.iter().map(|&p| letter(p).map(String::from)).collect::<Result<Vec<_>, _>>()?;
            let _ = write!(g, "{{{}}}", letters.join(","));
        }
        let _ = writeln!(out, "@T{}@partitions{g}: Ins{}-O{}", i + 1, s.instance + 1, s.site + 1);
    }
    out.push_str("# instances:\n");
    for (i, inst) in cfg.instances.iter().enumerate() {
        let args: Vec<String> = inst.args.iter().map(|a| a.to_string()).collect();
        let _ = write!(out, "Ins{}: {}({})", i + 1, inst.txn, args.join(","));
        for (label, v) in &inst.abs {
            let _ = write!(out, " {label}={v}");
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(PartialEq)]
enum Section {
    None,
    Init,
    Schedule,
    Instances,
}

fn syntax(line: usize, message: impl Into<String>) -> ConfError {
    ConfError::Syntax { line, message: message.into() }
}

fn int(s: &str, line: usize) -> Result<i64, ConfError> {
    s.trim().parse().map_err(|_| syntax(line, format!("expected an integer, found `{}`", s.trim())))
}

fn parens(s: &str, line: usize) -> Result<(&str, &str), ConfError> {
    let open = s.find('(').ok_or_else(|| syntax(line, "expected `(`"))?;
    let close = s.rfind(')').ok_or_else(|| syntax(line, "expected `)`"))?;
    if close < open {
        return Err(syntax(line, "mismatched parentheses"));
    }
    Ok((s[..open].trim(), &s[open + 1..close]))
}

fn list(s: &str) -> Vec<&str> {
    if s.trim().is_empty() {
        Vec::new()
    } else {
        s.split(',').map(str::trim).collect()
    }
}

fn parse_insert(text: &str, line: usize, schema: &Schema) -> Result<InitRow, ConfError> {
    let body = text.trim().trim_end_matches(';');
    let rest = body
        .strip_prefix("INSERT")
        .map(str::trim_start)
        .and_then(|r| r.strip_prefix("INTO"))
        .ok_or_else(|| syntax(line, "expected `INSERT INTO`"))?;
    let upper = rest.to_uppercase();
    let at = upper.find("VALUES").ok_or_else(|| syntax(line, "expected `VALUES`"))?;
    let (name, fields) = parens(&rest[..at], line)?;
    let (_, values) = parens(&rest[at + "VALUES".len()..], line)?;
    let table = schema
        .tables
        .iter()
        .find(|t| t.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| ConfError::UnknownTable(name.to_string()))?;
    let fields = list(fields);
    let values = list(values);
    if fields.len() != values.len() {
        return Err(syntax(line, "field and value counts differ"));
    }
    let mut row = BTreeMap::new();
    for (f, v) in fields.iter().zip(&values) {
        if !table.fields.iter().any(|x| x == f) {
            return Err(ConfError::BadRow { table: table.name.clone(), message: format!("unknown field `{f}`") });
        }
        row.insert(f.to_string(), int(v, line)?);
    }
    for f in &table.fields {
        if !row.contains_key(f) {
            return Err(ConfError::BadRow { table: table.name.clone(), message: format!("missing field `{f}`") });
        }
    }
    row.insert(ALIVE.to_string(), 1);
    let key = table.primary_key.iter().map(|k| row[k]).collect();
    Ok(InitRow { table: table.name.clone(), key, values: row })
}

fn parse_instance_ref(s: &str, line: usize) -> Result<(usize, usize), ConfError> {
    let bad = || syntax(line, format!("expected `InsN-OM`, found `{s}`"));
    let (i, o) = s.trim().split_once('-').ok_or_else(bad)?;
    let i: usize = i.strip_prefix("Ins").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
    let o: usize = o.strip_prefix('O').and_then(|n| n.parse().ok()).ok_or_else(bad)?;
    if i == 0 || o == 0 {
        return Err(bad());
    }
    Ok((i - 1, o - 1))
}

/// A schedule step and the number of partitions its line names.
fn parse_step(s: &str, line: usize) -> Result<(ScheduleStep, usize), ConfError> {
    let (head, target) = s.split_once(':').ok_or_else(|| syntax(line, "expected `:`"))?;
    let groups_text = head
        .split_once("@partitions")
        .map(|(_, g)| g.trim())
        .ok_or_else(|| syntax(line, "expected `@partitions`"))?;
    let mut groups = Vec::new();
    for part in groups_text.split('}') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let inner = part.strip_prefix('{').ok_or_else(|| syntax(line, "expected `{`"))?;
        let mut g = Vec::new();
        for l in list(inner) {
            let mut cs = l.chars();
            match (cs.next(), cs.next()) {
                (Some(c @ 'A'..='Z'), None) => g.push((c as u8 - b'A') as usize),
                _ => return Err(syntax(line, format!("bad partition name `{l}`"))),
            }
        }
        if g.is_empty() {
            return Err(syntax(line, "empty partition group"));
        }
        groups.push(g);
    }
    if groups.is_empty() {
        return Err(syntax(line, "no partition groups"));
    }
    let partition = groups[0][0];
    let count = groups.iter().map(Vec::len).sum();
    if groups.len() == 1 {
        groups.clear();
    }
    let (instance, site) = parse_instance_ref(target, line)?;
    Ok((ScheduleStep { instance, site, partition, groups }, count))
}

fn parse_instance(s: &str, line: usize) -> Result<(usize, Instance), ConfError> {
    let (label, rest) = s.split_once(':').ok_or_else(|| syntax(line, "expected `InsN: txn(args)`"))?;
    let n: usize = label
        .trim()
        .strip_prefix("Ins")
        .and_then(|n| n.parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| syntax(line, format!("bad instance label `{}`", label.trim())))?;
    let rest = rest.trim();
    let close = rest.find(')').ok_or_else(|| syntax(line, "expected `)`"))?;
    let (txn, args) = parens(&rest[..=close], line)?;
    let args = list(args).into_iter().map(|a| int(a, line)).collect::<Result<Vec<_>, _>>()?;
    let mut abs = BTreeMap::new();
    for word in rest[close + 1..].split_whitespace() {
        let (l, v) = word.split_once('=').ok_or_else(|| syntax(line, format!("expected `label=value`, found `{word}`")))?;
        abs.insert(l.to_string(), int(v, line)?);
    }
    Ok((n - 1, Instance { txn: txn.to_string(), args, abs }))
}

/// Parses the `.conf` format. The partition count is read from the
/// schedule; `unroll` is the loop bound used for replay. An empty schedule
/// is an error.
pub fn parse_conf(text: &str, schema: &Schema, unroll: usize) -> Result<TestConfiguration, ConfError> {
    let cfg = parse_history(text, schema, unroll)?;
    if cfg.schedule.is_empty() {
        return Err(ConfError::EmptySchedule);
    }
    Ok(cfg)
}

/// Like [`parse_conf`] but accepts an empty schedule, which describes the
/// empty history on one partition.
pub fn parse_history(text: &str, schema: &Schema, unroll: usize) -> Result<TestConfiguration, ConfError> {
    let mut section = Section::None;
    let mut init = Vec::new();
    let mut schedule = Vec::new();
    let mut instances: BTreeMap<usize, Instance> = BTreeMap::new();
    let mut pending = String::new();
    let mut pending_line = 0;
    let mut partitions = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix('#') {
            section = match h.trim().trim_end_matches(':').trim() {
                "initialize" => Section::Init,
                "schedule" => Section::Schedule,
                "instances" => Section::Instances,
                _ => continue,
            };
            continue;
        }
        match section {
            Section::None => return Err(syntax(line, "content before the first section header")),
            Section::Init => {
                if pending.is_empty() {
                    pending_line = line;
                }
                pending.push_str(t);
                pending.push(' ');
                if t.ends_with(';') {
                    init.push(parse_insert(&pending, pending_line, schema)?);
                    pending.clear();
                }
            }
            Section::Schedule => {
                let (step, count) = parse_step(t, line)?;
                if partitions == 0 {
                    partitions = count;
                } else if partitions != count {
                    return Err(syntax(line, "partition count differs from earlier steps"));
                }
                schedule.push(step);
            }
            Section::Instances => {
                let (n, inst) = parse_instance(t, line)?;
                if instances.insert(n, inst).is_some() {
                    return Err(syntax(line, format!("instance Ins{} declared twice", n + 1)));
                }
            }
        }
    }
    if !pending.is_empty() {
        return Err(syntax(pending_line, "unterminated INSERT (missing `;`)"));
    }
    let partitions = partitions.max(1);
    let instances: Vec<Instance> = instances.into_values().collect();
    for s in &schedule {
        if s.instance >= instances.len() {
            return Err(ConfError::UnknownInstance(s.instance + 1));
        }
    }
    Ok(ExecutionOracle { partitions, unroll, instances, schedule, init })
}

/// Runs a configuration on the simulator.
pub fn replay(cfg: &TestConfiguration, prog: &Program, schema: &Schema) -> Result<History, SemanticsError> {
    run(cfg, prog, schema)
}

/// Outcome of checking a replayed history for an expected cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// The expected cycle occurs; the cycle found is attached.
    Confirmed(Cycle),
    /// Valid cycles occur, none with the expected signature.
    DifferentCycle(Vec<Cycle>),
    CycleAbsent,
}

impl Verdict {
    pub fn is_confirmed(&self) -> bool {
        matches!(self, Verdict::Confirmed(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Confirmed(_) => "confirmed",
            Verdict::DifferentCycle(_) => "different-cycle",
            Verdict::CycleAbsent => "cycle-absent",
        }
    }
}

/// Looks for `expected` among the valid cycles of the history's
/// dependency graph, up to its length.
pub fn verify(h: &History, expected: &Cycle) -> Verdict {
    let g = dependency_graph(h);
    let found = find_cycles(&g, expected.len().max(3), false);
    let sig = expected.signature();
    if let Some(c) = found.iter().find(|c| c.signature() == sig) {
        return Verdict::Confirmed(c.clone());
    }
    if found.is_empty() {
        Verdict::CycleAbsent
    } else {
        Verdict::DifferentCycle(found)
    }
}

/// Valid cycles of a replayed history up to `max_len`.
pub fn manifested_cycles(h: &History, max_len: usize) -> Vec<Cycle> {
    find_cycles(&dependency_graph(h), max_len, false)
}

#[cfg(test)]
mod tests;
