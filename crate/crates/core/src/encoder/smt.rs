//! SMT-LIB term construction with light constant folding.

use std::fmt::Write;

pub const TRUE: &str = "true";
pub const FALSE: &str = "false";

pub fn int(n: i64) -> String {
    if n < 0 {
        format!("(- {})", n.unsigned_abs())
    } else {
        n.to_string()
    }
}

pub fn and<I: IntoIterator<Item = String>>(items: I) -> String {
    let mut parts = Vec::new();
    for x in items {
        if x == FALSE {
            return FALSE.into();
        }
        if x != TRUE {
            parts.push(x);
        }
    }
    match parts.len() {
        0 => TRUE.into(),
        1 => parts.pop().unwrap(),
        _ => format!("(and {})", parts.join(" ")),
    }
}

pub fn or<I: IntoIterator<Item = String>>(items: I) -> String {
    let mut parts = Vec::new();
    for x in items {
        if x == TRUE {
            return TRUE.into();
        }
        if x != FALSE {
            parts.push(x);
        }
    }
    match parts.len() {
        0 => FALSE.into(),
        1 => parts.pop().unwrap(),
        _ => format!("(or {})", parts.join(" ")),
    }
}

pub fn and2(a: String, b: String) -> String {
    and([a, b])
}

pub fn not(x: String) -> String {
    match x.as_str() {
        TRUE => FALSE.into(),
        FALSE => TRUE.into(),
        _ => format!("(not {x})"),
    }
}

pub fn implies(a: String, b: String) -> String {
    if a == FALSE || b == TRUE {
        return TRUE.into();
    }
    if a == TRUE {
        return b;
    }
    if b == FALSE {
        return not(a);
    }
    format!("(=> {a} {b})")
}

pub fn ite(c: String, a: String, b: String) -> String {
    match c.as_str() {
        TRUE => a,
        FALSE => b,
        _ if a == b => a,
        _ => format!("(ite {c} {a} {b})"),
    }
}

pub fn eq(a: String, b: String) -> String {
    if a == b {
        return TRUE.into();
    }
    format!("(= {a} {b})")
}

pub fn bin(op: &str, a: String, b: String) -> String {
    format!("({op} {a} {b})")
}

pub fn sum<I: IntoIterator<Item = String>>(items: I) -> String {
    let parts: Vec<String> = items.into_iter().filter(|x| x != "0").collect();
    match parts.len() {
        0 => "0".into(),
        1 => parts[0].clone(),
        _ => format!("(+ {})", parts.join(" ")),
    }
}

/// Exactly one of `xs` holds.
pub fn exactly_one(xs: &[String]) -> Vec<String> {
    let mut out = vec![or(xs.iter().cloned())];
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            out.push(not(and2(xs[i].clone(), xs[j].clone())));
        }
    }
    out
}

/// A problem text under construction: declarations first, then assertions.
#[derive(Clone, Debug, Default)]
pub struct Script {
    decls: String,
    body: String,
}

impl Script {
    pub fn declare_bool(&mut self, name: &str) {
        let _ = writeln!(self.decls, "(declare-const {name} Bool)");
    }

    pub fn declare_int(&mut self, name: &str) {
        let _ = writeln!(self.decls, "(declare-const {name} Int)");
    }

    /// Declares `name` and pins it with a defining equality.
    pub fn define(&mut self, name: &str, sort: &str, value: String) {
        let _ = writeln!(self.decls, "(declare-const {name} {sort})");
        let _ = writeln!(self.body, "(assert (= {name} {value}))");
    }

    pub fn assert(&mut self, x: String) {
        if x != TRUE {
            let _ = writeln!(self.body, "(assert {x})");
        }
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.body, "; {text}");
    }

    pub fn text(&self) -> String {
        let mut s = String::from("(set-option :produce-models true)\n(set-logic QF_LIA)\n");
        s.push_str(&self.decls);
        s.push_str(&self.body);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding() {
        assert_eq!(and(vec!["a".into(), TRUE.into()]), "a");
        assert_eq!(and(vec!["a".into(), FALSE.into()]), FALSE);
        assert_eq!(or(Vec::<String>::new()), FALSE);
        assert_eq!(implies(TRUE.into(), "b".into()), "b");
        assert_eq!(implies("a".into(), FALSE.into()), "(not a)");
        assert_eq!(int(-3), "(- 3)");
        assert_eq!(sum(vec!["0".into(), "x".into()]), "x");
        assert_eq!(exactly_one(&["a".into(), "b".into()]).len(), 2);
    }
}
