//! Solver subprocess driver speaking SMT-LIB 2 over stdin/stdout.

use super::sexpr::{parse_values, SExprError, Value};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Environment variable naming the solver binary; overrides configuration.
pub const SOLVER_ENV: &str = "DRIFT_SOLVER";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver binary `{0}` not found (set {SOLVER_ENV} or pass --solver)")]
    NotFound(String),
    #[error("failed to run solver `{path}`: {source}")]
    Spawn { path: String, source: std::io::Error },
    #[error("solver I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver reported an error: {0}")]
    Reported(String),
    #[error(transparent)]
    Parse(#[from] SExprError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Sat(BTreeMap<String, Value>),
    Unsat,
    Unknown(String),
}

#[derive(Clone, Debug)]
pub struct Solver {
    pub path: PathBuf,
    pub timeout: Duration,
}

fn on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(name)).find(|p| p.is_file())
}

impl Solver {
    /// Resolves the binary from the environment, then `configured`, then
    /// `z3` on the search path.
    pub fn locate(configured: Option<&Path>, timeout: Duration) -> Result<Solver, SolverError> {
        let chosen = std::env::var_os(SOLVER_ENV).map(PathBuf::from).or_else(|| configured.map(Path::to_path_buf));
        let path = match chosen {
            Some(p) if p.components().count() > 1 => {
                if !p.is_file() {
                    return Err(SolverError::NotFound(p.display().to_string()));
                }
                p
            }
            Some(p) => {
                let name = p.display().to_string();
                on_path(&name).ok_or(SolverError::NotFound(name))?
            }
            None => on_path("z3").ok_or_else(|| SolverError::NotFound("z3".into()))?,
        };
        Ok(Solver { path, timeout })
    }

    /// Runs `problem` followed by `(check-sat)` and, when satisfiable,
    /// `(get-value names)`.
    pub fn check(&self, problem: &str, names: &[String]) -> Result<Verdict, SolverError> {
        let mut child = Command::new(&self.path)
            .args(["-in", "-smt2"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SolverError::Spawn { path: self.path.display().to_string(), source })?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            let mut text = String::with_capacity(problem.len() + 64);
            text.push_str(problem);
            text.push_str("(check-sat)\n");
            if !names.is_empty() {
                text.push_str("(get-value (");
                text.push_str(&names.join(" "));
                text.push_str("))\n");
            }
            text.push_str("(exit)\n");
            // A solver that exits early closes the pipe; its output says why.
            let _ = stdin.write_all(text.as_bytes());
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            if child.try_wait()?.is_some() {
                break;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Ok(Verdict::Unknown("timeout".into()));
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        let out = reader.join().unwrap_or_default();
        let mut lines = out.lines();
        let first = lines.next().unwrap_or("").trim().to_string();
        match first.as_str() {
            "sat" => {
                let rest: String = lines.collect::<Vec<_>>().join("\n");
                if rest.contains("(error") {
                    return Err(SolverError::Reported(rest));
                }
                Ok(Verdict::Sat(parse_values(&rest)?))
            }
            "unsat" => Ok(Verdict::Unsat),
            "unknown" => Ok(Verdict::Unknown("solver returned unknown".into())),
            _ => Err(SolverError::Reported(out.trim().to_string())),
        }
    }
}
