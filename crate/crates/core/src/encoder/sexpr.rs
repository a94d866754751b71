//! Minimal s-expression reader for solver output.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SExprError {
    #[error("unbalanced parentheses in solver output")]
    Unbalanced,
    #[error("unexpected solver output: {0}")]
    Unexpected(String),
}

/// Parses every top-level expression of `text`.
pub fn parse_all(text: &str) -> Result<Vec<SExpr>, SExprError> {
    let mut stack: Vec<Vec<SExpr>> = vec![vec![]];
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => stack.push(vec![]),
            ')' => {
                let done = stack.pop().ok_or(SExprError::Unbalanced)?;
                stack.last_mut().ok_or(SExprError::Unbalanced)?.push(SExpr::List(done));
            }
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '"' => {
                let mut s = String::from('"');
                for c in chars.by_ref() {
                    s.push(c);
                    if c == '"' {
                        break;
                    }
                }
                stack.last_mut().unwrap().push(SExpr::Atom(s));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut s = String::from(c);
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' {
                        break;
                    }
                    s.push(n);
                    chars.next();
                }
                stack.last_mut().unwrap().push(SExpr::Atom(s));
            }
        }
    }
    if stack.len() != 1 {
        return Err(SExprError::Unbalanced);
    }
    Ok(stack.pop().unwrap())
}

/// A constant's value in a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Value {
    Bool(bool),
    Int(i64),
}

fn value_of(e: &SExpr) -> Option<Value> {
    match e {
        SExpr::Atom(a) if a == "true" => Some(Value::Bool(true)),
        SExpr::Atom(a) if a == "false" => Some(Value::Bool(false)),
        SExpr::Atom(a) => a.parse().ok().map(Value::Int),
        SExpr::List(xs) => match xs.as_slice() {
            [SExpr::Atom(m), x] if m == "-" => match value_of(x)? {
                Value::Int(n) => Some(Value::Int(-n)),
                Value::Bool(_) => None,
            },
            _ => None,
        },
    }
}

/// Reads `((name value) ...)` answers of `get-value` and
/// `(model (define-fun name () Sort value) ...)` models alike.
pub fn parse_values(text: &str) -> Result<BTreeMap<String, Value>, SExprError> {
    let mut out = BTreeMap::new();
    for top in parse_all(text)? {
        let SExpr::List(items) = top else { continue };
        for item in items {
            let SExpr::List(parts) = item else { continue };
            match parts.as_slice() {
                [SExpr::Atom(name), v] => {
                    if let Some(v) = value_of(v) {
                        out.insert(name.clone(), v);
                    }
                }
                [SExpr::Atom(d), SExpr::Atom(name), SExpr::List(args), _, v] if d == "define-fun" && args.is_empty() => {
                    if let Some(v) = value_of(v) {
                        out.insert(name.clone(), v);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_get_value_answers() {
        let v = parse_values("((x 4) (y (- 7)) (b true))").unwrap();
        assert_eq!(v["x"], Value::Int(4));
        assert_eq!(v["y"], Value::Int(-7));
        assert_eq!(v["b"], Value::Bool(true));
    }

    #[test]
    fn reads_models() {
        let v = parse_values("(model\n  (define-fun a () Int\n    (- 2))\n  (define-fun p () Bool false)\n)").unwrap();
        assert_eq!(v["a"], Value::Int(-2));
        assert_eq!(v["p"], Value::Bool(false));
    }

    #[test]
    fn rejects_unbalanced() {
        assert_eq!(parse_all("((a)"), Err(SExprError::Unbalanced));
        assert_eq!(parse_all("a)"), Err(SExprError::Unbalanced));
    }
}
