//! Text syntax for schemas (`.schema`) and programs (`.txn`).
//!
//! Schema: one `TABLE name (f, ...) PK (f, ...)` declaration per table.
//! Program: transactions `name(params) { stmt; ... }` where statements are
//! queries, `IF (φ) { .. }`, `ITERATE (e) { .. }` or `SKIP`. A query may be
//! prefixed with `@table`; keywords are case-insensitive.

mod lexer;
mod pretty;

pub use pretty::{pretty_bool, pretty_expr, pretty_print, pretty_query};

use crate::model::*;
use lexer::{lex, Tok, Token};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{span}: {message}")]
    Syntax { span: Span, message: String },
    #[error("invalid program:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

fn err<T>(span: Span, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Syntax { span, message: message.into() })
}

const KEYWORDS: [&str; 27] = [
    "select", "as", "where", "update", "set", "insert", "into", "values", "delete", "from", "if", "iterate", "skip",
    "and", "or", "not", "true", "false", "min", "max", "any", "iter", "size", "proj", "this", "table", "pk",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s))
}

pub fn parse_schema(text: &str) -> Result<Schema, ParseError> {
    let toks = lex(text).map_err(|(span, message)| ParseError::Syntax { span, message })?;
    let mut p = Parser::new(toks, None);
    let mut schema = Schema::default();
    while !p.at_eof() {
        let start = p.span();
        p.keyword("table")?;
        let name = p.ident()?;
        if schema.table(&name).is_some() {
            return err(start, format!("duplicate table `{name}`"));
        }
        let fields = p.ident_list()?;
        p.keyword("pk")?;
        let pk_span = p.span();
        let pk = p.ident_list()?;
        let mut seen = BTreeSet::new();
        for f in &fields {
            if f == ALIVE {
                return err(start, format!("field name `{ALIVE}` is reserved"));
            }
            if !seen.insert(f) {
                return err(start, format!("duplicate field `{f}` in table `{name}`"));
            }
        }
        if pk.is_empty() {
            return err(pk_span, format!("table `{name}` has an empty primary key"));
        }
        for k in &pk {
            if !fields.contains(k) {
                return err(pk_span, format!("primary-key field `{k}` is not declared in `{name}`"));
            }
        }
        if pk.iter().collect::<BTreeSet<_>>().len() != pk.len() {
            return err(pk_span, format!("duplicate primary-key field in `{name}`"));
        }
        schema.tables.push(TableDef { name, fields, primary_key: pk });
    }
    Ok(schema)
}

/// Parses and validates a program against `schema`.
pub fn parse_program(text: &str, schema: &Schema) -> Result<Program, ParseError> {
    let prog = parse_program_unchecked(text, schema)?;
    let diags = validate_program(schema, &prog);
    if diags.is_empty() {
        Ok(prog)
    } else {
        Err(ParseError::Invalid(diags))
    }
}

/// Parses without running validation (table names are still resolved).
pub fn parse_program_unchecked(text: &str, schema: &Schema) -> Result<Program, ParseError> {
    let toks = lex(text).map_err(|(span, message)| ParseError::Syntax { span, message })?;
    let mut p = Parser::new(toks, Some(schema));
    let mut prog = Program::default();
    while !p.at_eof() {
        prog.transactions.push(p.transaction()?);
    }
    Ok(prog)
}

struct Parser<'s> {
    toks: Vec<Token>,
    pos: usize,
    schema: Option<&'s Schema>,
    any_counter: usize,
    /// Table names used as `t.f` qualifiers inside the current query.
    hints: Vec<(String, Span)>,
}

impl<'s> Parser<'s> {
    fn new(toks: Vec<Token>, schema: Option<&'s Schema>) -> Self {
        Parser { toks, pos: 0, schema, any_counter: 0, hints: vec![] }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn is_kw_at(&self, k: usize, kw: &str) -> bool {
        matches!(self.peek_at(k), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            err(self.span(), format!("expected `{}`, found {}", kw.to_uppercase(), self.describe()))
        }
    }

    fn sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            err(self.span(), format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) && s != "_" => {
                self.bump();
                Ok(s)
            }
            _ => err(self.span(), format!("expected identifier, found {}", self.describe())),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<String>, ParseError> {
        self.sym("(")?;
        let mut out = Vec::new();
        if !self.is_sym(")") {
            out.push(self.ident()?);
            while self.is_sym(",") {
                self.bump();
                out.push(self.ident()?);
            }
        }
        self.sym(")")?;
        Ok(out)
    }

    fn transaction(&mut self) -> Result<Transaction, ParseError> {
        let span = self.span();
        let name = self.ident()?;
        let params = self.ident_list()?;
        self.any_counter = 0;
        let body = self.block()?;
        Ok(Transaction { name, params, body, span })
    }

    fn block(&mut self) -> Result<Command, ParseError> {
        self.sym("{")?;
        let mut cmds = Vec::new();
        loop {
            while self.is_sym(";") {
                self.bump();
            }
            if self.is_sym("}") {
                self.bump();
                break;
            }
            let (cmd, braced) = self.statement()?;
            cmds.push(cmd);
            if self.is_sym(";") {
                self.bump();
            } else if !braced && !self.is_sym("}") {
                return err(self.span(), format!("expected `;` or `}}`, found {}", self.describe()));
            }
        }
        Ok(match cmds.len() {
            0 => Command::Skip,
            1 => cmds.pop().unwrap(),
            _ => Command::Seq(cmds),
        })
    }

    fn statement(&mut self) -> Result<(Command, bool), ParseError> {
        let span = self.span();
        if self.is_kw("skip") {
            self.bump();
            return Ok((Command::Skip, false));
        }
        if self.is_kw("if") {
            self.bump();
            self.sym("(")?;
            let g = self.bexpr()?;
            self.sym(")")?;
            let body = self.block()?;
            return Ok((Command::If(g, Box::new(body), span), true));
        }
        if self.is_kw("iterate") {
            self.bump();
            self.sym("(")?;
            let n = self.expr()?;
            self.sym(")")?;
            let body = self.block()?;
            return Ok((Command::Iterate(n, Box::new(body), span), true));
        }
        Ok((Command::Query(self.query()?), false))
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        let span = self.span();
        self.hints.clear();
        let mut explicit = None;
        if self.is_sym("@") {
            self.bump();
            let sp = self.span();
            explicit = Some((self.ident()?, sp));
        }
        let mut direct: Vec<String> = Vec::new();
        let kind = if self.is_kw("select") {
            self.bump();
            let agg = if self.is_kw("min") && matches!(self.peek_at(1), Tok::Sym("(")) {
                Some(Agg::Min)
            } else if self.is_kw("max") && matches!(self.peek_at(1), Tok::Sym("(")) {
                Some(Agg::Max)
            } else {
                None
            };
            let field = if agg.is_some() {
                self.bump();
                self.sym("(")?;
                let f = self.field_ref()?;
                self.sym(")")?;
                f
            } else {
                self.field_ref()?
            };
            direct.push(field.clone());
            self.keyword("as")?;
            let var = self.ident()?;
            self.keyword("where")?;
            let cond = self.bexpr()?;
            match agg {
                Some(agg) => QueryKind::SelectAgg { agg, field, var, cond },
                None => QueryKind::Select { field, var, cond },
            }
        } else if self.is_kw("update") {
            self.bump();
            if !self.is_kw("set") {
                let sp = self.span();
                explicit = Some((self.ident()?, sp));
            }
            self.keyword("set")?;
            let field = self.field_ref()?;
            direct.push(field.clone());
            self.sym("=")?;
            let value = self.expr()?;
            self.keyword("where")?;
            let cond = self.bexpr()?;
            QueryKind::Update { field, value, cond }
        } else if self.is_kw("insert") {
            self.bump();
            if self.is_kw("into") {
                self.bump();
                let sp = self.span();
                explicit = Some((self.ident()?, sp));
            }
            self.keyword("values")?;
            self.sym("(")?;
            let mut values = Vec::new();
            loop {
                let f = self.field_ref()?;
                direct.push(f.clone());
                self.sym("=")?;
                let e = self.expr()?;
                values.push((f, e));
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
            self.sym(")")?;
            QueryKind::Insert { values }
        } else if self.is_kw("delete") {
            self.bump();
            if self.is_kw("from") {
                self.bump();
                let sp = self.span();
                explicit = Some((self.ident()?, sp));
            }
            self.keyword("where")?;
            let cond = self.bexpr()?;
            QueryKind::Delete { cond }
        } else {
            return err(span, format!("expected a query or statement, found {}", self.describe()));
        };
        let mut q = Query { table: String::new(), kind, span };
        q.table = self.resolve_table(&q, explicit, &direct)?;
        Ok(q)
    }

    /// `f` or `t.f`; a qualifier is recorded as a table hint.
    fn field_ref(&mut self) -> Result<String, ParseError> {
        let sp = self.span();
        let first = self.ident()?;
        if self.is_sym(".") {
            self.bump();
            let f = self.ident()?;
            self.hints.push((first, sp));
            Ok(f)
        } else {
            Ok(first)
        }
    }

    fn resolve_table(&self, q: &Query, explicit: Option<(String, Span)>, direct: &[String]) -> Result<String, ParseError> {
        let Some(schema) = self.schema else { return Ok(String::new()) };
        let mut named: Vec<(String, Span)> = explicit.into_iter().collect();
        named.extend(self.hints.iter().cloned());
        if let Some((t, sp)) = named.first() {
            if schema.table(t).is_none() {
                return err(*sp, format!("unknown table `{t}`"));
            }
            if let Some((u, sp2)) = named.iter().find(|(u, _)| u != t) {
                return err(*sp2, format!("query mixes tables `{t}` and `{u}`"));
            }
            return Ok(t.clone());
        }
        if schema.tables.len() == 1 {
            return Ok(schema.tables[0].name.clone());
        }
        let mut fields: Vec<String> = direct.to_vec();
        if let Some(c) = q.cond() {
            fields.extend(where_fields(c).into_iter().filter(|f| f != ALIVE));
        }
        let candidates: Vec<&TableDef> =
            schema.tables.iter().filter(|t| fields.iter().all(|f| t.has_field(f))).collect();
        match candidates.as_slice() {
            [t] => Ok(t.name.clone()),
            [] => err(q.span, "no table declares every field this query names"),
            _ => err(q.span, "ambiguous table; qualify the query with `@table`"),
        }
    }

    fn bexpr(&mut self) -> Result<BoolExpr, ParseError> {
        let mut l = self.bterm()?;
        while self.is_kw("or") || self.is_sym("||") {
            self.bump();
            let r = self.bterm()?;
            l = BoolExpr::Or(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn bterm(&mut self) -> Result<BoolExpr, ParseError> {
        let mut l = self.bfactor()?;
        while self.is_kw("and") || self.is_sym("&&") {
            self.bump();
            let r = self.bfactor()?;
            l = BoolExpr::And(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn bfactor(&mut self) -> Result<BoolExpr, ParseError> {
        if self.is_kw("not") || self.is_sym("!") {
            self.bump();
            return Ok(BoolExpr::Not(Box::new(self.bfactor()?)));
        }
        if self.is_kw("true") {
            self.bump();
            return Ok(BoolExpr::True);
        }
        if self.is_kw("false") {
            self.bump();
            return Ok(BoolExpr::False);
        }
        if self.is_sym("(") {
            let (save, counter, hints) = (self.pos, self.any_counter, self.hints.len());
            if let Ok(c) = self.comparison() {
                return Ok(c);
            }
            self.pos = save;
            self.any_counter = counter;
            self.hints.truncate(hints);
            self.bump();
            let b = self.bexpr()?;
            self.sym(")")?;
            return Ok(b);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<BoolExpr, ParseError> {
        let l = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return err(self.span(), format!("expected a comparison operator, found {}", self.describe())),
        };
        self.bump();
        let r = self.expr()?;
        Ok(BoolExpr::Cmp(l, op, r))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let r = self.term()?;
            l = Expr::Bin(op, Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut l = self.primary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                _ => break,
            };
            self.bump();
            let r = self.primary()?;
            l = Expr::Bin(op, Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Int(n))
            }
            Tok::Sym("-") => {
                self.bump();
                match self.peek().clone() {
                    Tok::Int(n) => {
                        self.bump();
                        Ok(Expr::Int(-n))
                    }
                    _ => err(span, "`-` must be followed by an integer literal"),
                }
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "_" => {
                self.bump();
                Ok(Expr::Hole)
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("any") => {
                self.bump();
                let id = self.any_counter;
                self.any_counter += 1;
                self.sym("{")?;
                let c = self.bexpr()?;
                self.sym("}")?;
                Ok(Expr::Any { id, constraint: Box::new(c) })
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("iter") => {
                self.bump();
                Ok(Expr::Iter)
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("size") => {
                self.bump();
                self.sym("(")?;
                let v = self.ident()?;
                self.sym(")")?;
                Ok(Expr::Size(v))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("proj") => {
                self.bump();
                self.sym("(")?;
                let f = self.ident()?;
                self.sym(",")?;
                let v = self.ident()?;
                self.sym(",")?;
                let i = self.expr()?;
                self.sym(")")?;
                Ok(Expr::Proj(f, v, Box::new(i)))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("this") => {
                self.bump();
                self.sym(".")?;
                Ok(Expr::This(self.ident()?))
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                if matches!(self.peek_at(1), Tok::Sym(".")) && !self.is_kw_at(0, "this") {
                    self.bump();
                    self.bump();
                    let f = self.ident()?;
                    self.hints.push((s, span));
                    return Ok(Expr::This(f));
                }
                self.bump();
                Ok(Expr::Arg(s))
            }
            _ => err(span, format!("expected an expression, found {}", self.describe())),
        }
    }
}

#[cfg(test)]
mod tests;
