use super::ast::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UnrollError {
    #[error("unknown transaction `{0}`")]
    UnknownTxn(String),
    #[error("transaction `{0}` has no query site {1}")]
    UnknownSite(String, usize),
}

/// One query occurrence after loop unrolling.
#[derive(Clone, Debug, Serialize)]
pub struct Site {
    pub index: usize,
    /// Position of the query in source order.
    pub ordinal: usize,
    /// Iteration copy (1-based) of each enclosing loop, outermost first.
    pub copies: Vec<usize>,
    /// The query with `iter` replaced by the copy number and `any{}` ids
    /// replaced by unrolled abstract-value ids.
    pub query: Query,
    /// Enclosing guards in evaluation order; their conjunction is Λ.
    pub guards: Vec<BoolExpr>,
    /// Variable → index of the site whose SELECT binds it here.
    pub scope: BTreeMap<String, usize>,
}

/// Iteration count of an unrolled loop; must not exceed the bound.
#[derive(Clone, Debug, Serialize)]
pub struct LoopBound {
    pub count: Expr,
    pub guards: Vec<BoolExpr>,
    pub scope: BTreeMap<String, usize>,
}

/// An `any{}` occurrence instantiated once per enclosing loop copy.
#[derive(Clone, Debug, Serialize)]
pub struct AbsSite {
    pub source: usize,
    pub copies: Vec<usize>,
    pub constraint: BoolExpr,
    pub guards: Vec<BoolExpr>,
    pub scope: BTreeMap<String, usize>,
}

impl AbsSite {
    pub fn label(&self) -> String {
        abs_label(self.source, &self.copies)
    }
}

pub fn abs_label(source: usize, copies: &[usize]) -> String {
    if copies.is_empty() {
        format!("abs_{source}")
    } else {
        let c: Vec<String> = copies.iter().map(|c| c.to_string()).collect();
        format!("abs_{source}@{}", c.join("."))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UnrolledTxn {
    pub name: String,
    pub params: Vec<String>,
    pub bound: usize,
    pub sites: Vec<Site>,
    pub loops: Vec<LoopBound>,
    pub abs: Vec<AbsSite>,
}

impl UnrolledTxn {
    pub fn reachability(&self, site: usize) -> BoolExpr {
        BoolExpr::conj(self.sites[site].guards.iter().cloned())
    }

    /// `flow[a][b]`: a value fetched by site `a` reaches site `b`
    /// (directly or through intermediate SELECTs).
    pub fn dataflow(&self) -> Vec<Vec<bool>> {
        let n = self.sites.len();
        let mut flow = vec![vec![false; n]; n];
        for (b, s) in self.sites.iter().enumerate() {
            let mut vars = vars_in_query(&s.query);
            for g in &s.guards {
                vars.extend(vars_in_bool(g));
            }
            for v in vars {
                if let Some(&a) = s.scope.get(&v) {
                    flow[a][b] = true;
                }
            }
        }
        for k in 0..n {
            for a in 0..n {
                if flow[a][k] {
                    for b in 0..n {
                        if flow[k][b] {
                            flow[a][b] = true;
                        }
                    }
                }
            }
        }
        flow
    }

    /// Same-transaction pairs linked by dataflow in either direction.
    pub fn st_plus(&self) -> Vec<Vec<bool>> {
        let f = self.dataflow();
        let n = f.len();
        (0..n).map(|a| (0..n).map(|b| a != b && (f[a][b] || f[b][a])).collect()).collect()
    }

    /// Whether the value fetched by site `a` is consumed later.
    pub fn site_used(&self, a: usize) -> bool {
        let q = &self.sites[a].query;
        if !matches!(q.kind, QueryKind::Select { .. } | QueryKind::SelectAgg { .. }) {
            return true;
        }
        self.dataflow()[a].iter().any(|&x| x)
    }

    pub fn abs_index(&self, label: &str) -> Option<usize> {
        self.abs.iter().position(|a| a.label() == label)
    }
}

pub fn unroll(txn: &Transaction, bound: usize) -> UnrolledTxn {
    let mut u = Unroller {
        out: UnrolledTxn {
            name: txn.name.clone(),
            params: txn.params.clone(),
            bound,
            sites: vec![],
            loops: vec![],
            abs: vec![],
        },
        ordinal: 0,
        abs_ids: BTreeMap::new(),
    };
    let cx = Cx { iter: None, copies: vec![], guards: vec![] };
    let mut scope = BTreeMap::new();
    u.command(&txn.body, &cx, &mut scope);
    u.out
}

pub fn unroll_program(prog: &Program, bound: usize) -> Vec<UnrolledTxn> {
    prog.transactions.iter().map(|t| unroll(t, bound)).collect()
}

/// Λ of an unrolled query site.
pub fn reachability_condition(prog: &Program, txn: &str, site: usize, bound: usize) -> Result<BoolExpr, UnrollError> {
    let t = prog.txn(txn).ok_or_else(|| UnrollError::UnknownTxn(txn.to_string()))?;
    let u = unroll(t, bound);
    if site >= u.sites.len() {
        return Err(UnrollError::UnknownSite(txn.to_string(), site));
    }
    Ok(u.reachability(site))
}

#[derive(Clone)]
struct Cx {
    iter: Option<i64>,
    copies: Vec<usize>,
    guards: Vec<BoolExpr>,
}

struct Unroller {
    out: UnrolledTxn,
    ordinal: usize,
    abs_ids: BTreeMap<(usize, Vec<usize>), usize>,
}

impl Unroller {
    fn command(&mut self, c: &Command, cx: &Cx, scope: &mut BTreeMap<String, usize>) {
        match c {
            Command::Skip => {}
            Command::Seq(cs) => cs.iter().for_each(|c| self.command(c, cx, scope)),
            Command::Query(q) => {
                let query = self.query(q, cx, scope);
                let index = self.out.sites.len();
                self.out.sites.push(Site {
                    index,
                    ordinal: self.ordinal,
                    copies: cx.copies.clone(),
                    query,
                    guards: cx.guards.clone(),
                    scope: scope.clone(),
                });
                self.ordinal += 1;
                if let Some(v) = q.bound_var() {
                    scope.insert(v.to_string(), index);
                }
            }
            Command::If(g, body, _) => {
                let g = self.boolean(g, cx, scope);
                let mut inner = cx.clone();
                inner.guards.push(g);
                let mut s = scope.clone();
                self.command(body, &inner, &mut s);
            }
            Command::Iterate(n, body, _) => {
                let count = self.expr(n, cx, scope);
                self.out.loops.push(LoopBound { count: count.clone(), guards: cx.guards.clone(), scope: scope.clone() });
                let start = self.ordinal;
                let mut end = start;
                for k in 1..=self.out.bound {
                    self.ordinal = start;
                    let mut inner = cx.clone();
                    inner.iter = Some(k as i64);
                    inner.copies.push(k);
                    inner.guards.push(BoolExpr::Cmp(Expr::Int(k as i64), CmpOp::Le, count.clone()));
                    let mut s = scope.clone();
                    self.command(body, &inner, &mut s);
                    end = self.ordinal;
                }
                self.ordinal = if self.out.bound == 0 { start + body.queries().len() } else { end };
            }
        }
    }

    fn query(&mut self, q: &Query, cx: &Cx, scope: &BTreeMap<String, usize>) -> Query {
        let kind = match &q.kind {
            QueryKind::Select { field, var, cond } => {
                QueryKind::Select { field: field.clone(), var: var.clone(), cond: self.boolean(cond, cx, scope) }
            }
            QueryKind::SelectAgg { agg, field, var, cond } => QueryKind::SelectAgg {
                agg: *agg,
                field: field.clone(),
                var: var.clone(),
                cond: self.boolean(cond, cx, scope),
            },
            QueryKind::Update { field, value, cond } => QueryKind::Update {
                field: field.clone(),
                value: self.expr(value, cx, scope),
                cond: self.boolean(cond, cx, scope),
            },
            QueryKind::Insert { values } => QueryKind::Insert {
                values: values.iter().map(|(f, e)| (f.clone(), self.expr(e, cx, scope))).collect(),
            },
            QueryKind::Delete { cond } => QueryKind::Delete { cond: self.boolean(cond, cx, scope) },
        };
        Query { table: q.table.clone(), kind, span: q.span }
    }

    fn boolean(&mut self, b: &BoolExpr, cx: &Cx, scope: &BTreeMap<String, usize>) -> BoolExpr {
        match b {
            BoolExpr::True => BoolExpr::True,
            BoolExpr::False => BoolExpr::False,
            BoolExpr::Cmp(l, op, r) => BoolExpr::Cmp(self.expr(l, cx, scope), *op, self.expr(r, cx, scope)),
            BoolExpr::Not(x) => BoolExpr::Not(Box::new(self.boolean(x, cx, scope))),
            BoolExpr::And(l, r) => BoolExpr::And(Box::new(self.boolean(l, cx, scope)), Box::new(self.boolean(r, cx, scope))),
            BoolExpr::Or(l, r) => BoolExpr::Or(Box::new(self.boolean(l, cx, scope)), Box::new(self.boolean(r, cx, scope))),
        }
    }

    fn expr(&mut self, e: &Expr, cx: &Cx, scope: &BTreeMap<String, usize>) -> Expr {
        match e {
            Expr::Iter => cx.iter.map(Expr::Int).unwrap_or(Expr::Iter),
            Expr::Bin(op, l, r) => Expr::Bin(*op, Box::new(self.expr(l, cx, scope)), Box::new(self.expr(r, cx, scope))),
            Expr::Proj(f, v, i) => Expr::Proj(f.clone(), v.clone(), Box::new(self.expr(i, cx, scope))),
            Expr::Any { id, constraint } => {
                let key = (*id, cx.copies.clone());
                let constraint = self.boolean(constraint, cx, scope);
                let uid = match self.abs_ids.get(&key) {
                    Some(&u) => u,
                    None => {
                        let u = self.out.abs.len();
                        self.out.abs.push(AbsSite {
                            source: *id,
                            copies: cx.copies.clone(),
                            constraint: constraint.clone(),
                            guards: cx.guards.clone(),
                            scope: scope.clone(),
                        });
                        self.abs_ids.insert(key, u);
                        u
                    }
                };
                Expr::Any { id: uid, constraint: Box::new(constraint) }
            }
            other => other.clone(),
        }
    }
}
