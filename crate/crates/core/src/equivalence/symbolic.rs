//! Symbolic tables and symbolic execution of plans.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::expr::{render_literal, BinaryOp, Expr};
use crate::plan::{NodeId, Operator, QueryPlan, SchemaProvider};
use crate::relation::{ColumnRef, Schema};
use crate::udf::{LlmUdf, OutputKind};
use crate::value::Value;

/// A symbolic cell value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// A fresh symbol `v{n}`, one per base-table cell.
    Sym(usize),
    Lit(Value),
    /// An LLM UDF, treated as an uninterpreted function.
    Udf { func: String, args: Vec<Term> },
    /// An interpreted function (arithmetic, builtins) or an opaque operator
    /// output, compared only structurally.
    Op { op: String, args: Vec<Term> },
    /// A boolean-valued expression used as a value.
    Pred(Box<Formula>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Const(bool),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Cmp { op: CmpOp, left: Term, right: Term },
    /// Truth of a boolean-valued term, e.g. a semantic predicate.
    Atom(Term),
}

impl Formula {
    pub fn and(self, other: Formula) -> Formula {
        match self {
            Formula::Const(true) => other,
            Formula::And(mut parts) => {
                parts.push(other);
                Formula::And(parts)
            }
            f => Formula::And(vec![f, other]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymColumn {
    pub qualifier: Option<String>,
    pub name: String,
    pub term: Term,
}

impl SymColumn {
    fn matches(&self, r: &ColumnRef) -> bool {
        self.name == r.name
            && match &r.qualifier {
                None => true,
                Some(q) => self.qualifier.as_deref() == Some(q.as_str()),
            }
    }

    fn label(&self) -> String {
        match &self.qualifier {
            Some(q) => format!("{q}.{}", self.name),
            None => self.name.clone(),
        }
    }
}

/// One symbolic output row and the condition under which it exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicTable {
    pub columns: Vec<SymColumn>,
    pub row_exist: Formula,
}

impl SymbolicTable {
    fn resolve(&self, r: &ColumnRef) -> Result<&Term, SymError> {
        let mut hits = self.columns.iter().filter(|c| c.matches(r));
        match (hits.next(), hits.next()) {
            (Some(c), None) => Ok(&c.term),
            (Some(_), Some(_)) => Err(SymError::Ambiguous(r.clone())),
            (None, _) => Err(SymError::Unresolved(r.clone())),
        }
    }

    pub fn canonical(&self) -> SymbolicTable {
        SymbolicTable {
            columns: self
                .columns
                .iter()
                .map(|c| SymColumn { term: super::canon::canonical_term(&c.term), ..c.clone() })
                .collect(),
            row_exist: super::canonicalize(&self.row_exist),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Sym(n) => write!(f, "v{n}"),
            Term::Lit(v) => f.write_str(&render_literal(v)),
            Term::Udf { func, args } | Term::Op { op: func, args } => {
                write!(f, "{func}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Term::Pred(p) => write!(f, "[{p}]"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, parts: &[Formula], sep: &str| -> fmt::Result {
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                match p {
                    Formula::And(_) | Formula::Or(_) => write!(f, "({p})")?,
                    _ => write!(f, "{p}")?,
                }
            }
            Ok(())
        };
        match self {
            Formula::Const(b) => write!(f, "{b}"),
            Formula::And(parts) => join(f, parts, " AND "),
            Formula::Or(parts) => join(f, parts, " OR "),
            Formula::Not(inner) => match **inner {
                Formula::And(_) | Formula::Or(_) => write!(f, "NOT ({inner})"),
                _ => write!(f, "NOT {inner}"),
            },
            Formula::Cmp { op, left, right } => write!(f, "{left} {} {right}", op.symbol()),
            Formula::Atom(t) => write!(f, "{t}"),
        }
    }
}

impl fmt::Display for SymbolicTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", c.label(), c.term)?;
        }
        write!(f, ") exists when {}", self.row_exist)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("column `{0}` does not resolve")]
    Unresolved(ColumnRef),
    #[error("column `{0}` is ambiguous")]
    Ambiguous(ColumnRef),
    #[error("{0} is not supported by symbolic execution")]
    Unsupported(String),
    #[error("{0}")]
    Invalid(String),
}

/// Symbolic rows for the base relations of the plans being compared.
#[derive(Debug, Clone, Default)]
pub struct BaseTables {
    tables: BTreeMap<String, SymbolicTable>,
    next: usize,
}

impl BaseTables {
    pub fn new() -> Self {
        BaseTables { tables: BTreeMap::new(), next: 1 }
    }

    /// Allocates symbols for every scanned table, in order of first appearance.
    pub fn for_plans(plans: &[&QueryPlan], catalog: &dyn SchemaProvider) -> Result<Self, SymError> {
        let mut base = BaseTables::new();
        for plan in plans {
            for id in plan.postorder() {
                if let Operator::Scan { table } = plan.op(id) {
                    if base.tables.contains_key(table) {
                        continue;
                    }
                    let schema = catalog.table_schema(table).ok_or_else(|| SymError::UnknownTable(table.clone()))?;
                    let cols: Vec<(Option<String>, String)> =
                        schema.columns().iter().map(|c| (Some(table.clone()), c.name.clone())).collect();
                    base.add_columns(table, cols);
                }
            }
        }
        Ok(base)
    }

    /// Adds a relation whose columns keep the qualifiers of `schema`.
    pub fn add_table(&mut self, name: &str, schema: &Schema) {
        let cols = schema.columns().iter().map(|c| (c.qualifier.clone(), c.name.clone())).collect();
        self.add_columns(name, cols);
    }

    fn add_columns(&mut self, name: &str, cols: Vec<(Option<String>, String)>) {
        if self.next == 0 {
            self.next = 1;
        }
        let columns = cols
            .into_iter()
            .map(|(qualifier, name)| {
                let term = Term::Sym(self.next);
                self.next += 1;
                SymColumn { qualifier, name, term }
            })
            .collect();
        self.tables.insert(name.to_string(), SymbolicTable { columns, row_exist: Formula::Const(true) });
    }

    pub fn table(&self, name: &str) -> Option<&SymbolicTable> {
        self.tables.get(name)
    }

    pub fn symbol_count(&self) -> usize {
        self.next.saturating_sub(1)
    }
}

/// Strict symbolic execution: TopK and aggregation are rejected.
pub fn symbolic_execute(plan: &QueryPlan, base: &BaseTables) -> Result<SymbolicTable, SymError> {
    SymbolicExecutor { opaque_unsupported: false }.run(plan, base)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SymbolicExecutor {
    /// Model TopK and aggregation outputs as functions of the whole subtree,
    /// so identical subtrees compare equal and anything else does not.
    pub opaque_unsupported: bool,
}

impl SymbolicExecutor {
    pub fn run(&self, plan: &QueryPlan, base: &BaseTables) -> Result<SymbolicTable, SymError> {
        let mut out: Vec<Option<SymbolicTable>> = vec![None; plan.len()];
        for id in plan.postorder() {
            let inputs: Vec<&SymbolicTable> =
                plan.children(id).iter().map(|c| out[c.0].as_ref().expect("postorder")).collect();
            let t = self.step(plan, id, &inputs, base)?;
            out[id.0] = Some(t);
        }
        Ok(out[plan.root().0].take().expect("root"))
    }

    fn step(&self, plan: &QueryPlan, id: NodeId, inputs: &[&SymbolicTable], base: &BaseTables) -> Result<SymbolicTable, SymError> {
        let input = |i: usize| -> Result<&SymbolicTable, SymError> {
            inputs.get(i).copied().ok_or_else(|| SymError::Invalid("missing input".into()))
        };
        let op = plan.op(id);
        match op {
            Operator::Scan { table } => base.table(table).cloned().ok_or_else(|| SymError::UnknownTable(table.clone())),
            Operator::Select { predicate } => {
                let t = input(0)?;
                let f = formula(predicate, t)?;
                Ok(SymbolicTable { columns: t.columns.clone(), row_exist: t.row_exist.clone().and(f) })
            }
            Operator::SemanticSelect { udf } => {
                let t = input(0)?;
                let f = Formula::Atom(udf_term(udf, None, t)?);
                Ok(SymbolicTable { columns: t.columns.clone(), row_exist: t.row_exist.clone().and(f) })
            }
            Operator::Project { columns } => {
                let t = input(0)?;
                let mut cols = Vec::with_capacity(columns.len());
                for c in columns {
                    let hit = t.columns.iter().filter(|x| x.matches(c)).collect::<Vec<_>>();
                    match hit.as_slice() {
                        [one] => cols.push((*one).clone()),
                        [] => return Err(SymError::Unresolved(c.clone())),
                        _ => return Err(SymError::Ambiguous(c.clone())),
                    }
                }
                Ok(SymbolicTable { columns: cols, row_exist: t.row_exist.clone() })
            }
            Operator::Derive { expr, alias } => {
                let t = input(0)?;
                let term = term(expr, t)?;
                let mut cols = t.columns.clone();
                cols.push(SymColumn { qualifier: None, name: alias.clone(), term });
                Ok(SymbolicTable { columns: cols, row_exist: t.row_exist.clone() })
            }
            Operator::SemanticProject { udf, outputs } => {
                let t = input(0)?;
                let mut cols = t.columns.clone();
                match &udf.output {
                    OutputKind::Tuple(_) => {
                        for o in outputs {
                            cols.push(SymColumn { qualifier: None, name: o.clone(), term: udf_term(udf, Some(o), t)? });
                        }
                    }
                    _ => {
                        for o in outputs {
                            cols.push(SymColumn { qualifier: None, name: o.clone(), term: udf_term(udf, None, t)? });
                        }
                    }
                }
                Ok(SymbolicTable { columns: cols, row_exist: t.row_exist.clone() })
            }
            Operator::Join { on } => {
                let (l, r) = (input(0)?, input(1)?);
                let mut f = l.row_exist.clone().and(r.row_exist.clone());
                for (a, b) in on {
                    let ta = l.resolve(a).or_else(|_| r.resolve(a))?.clone();
                    let tb = r.resolve(b).or_else(|_| l.resolve(b))?.clone();
                    f = f.and(Formula::Cmp { op: CmpOp::Eq, left: ta, right: tb });
                }
                Ok(SymbolicTable { columns: concat(l, r), row_exist: f })
            }
            Operator::SemanticJoin { udf } => {
                let (l, r) = (input(0)?, input(1)?);
                let both = SymbolicTable { columns: concat(l, r), row_exist: Formula::Const(true) };
                let p = Formula::Atom(udf_term(udf, None, &both)?);
                Ok(SymbolicTable { columns: both.columns, row_exist: l.row_exist.clone().and(r.row_exist.clone()).and(p) })
            }
            Operator::TopK { .. } | Operator::SemanticTopK { .. } => {
                if !self.opaque_unsupported {
                    return Err(SymError::Unsupported(op.label()));
                }
                let t = input(0)?;
                let tag = subtree_tag(plan, id);
                let keep = Formula::Atom(Term::Op {
                    op: format!("topk#{tag}"),
                    args: t.columns.iter().map(|c| c.term.clone()).collect(),
                });
                Ok(SymbolicTable { columns: t.columns.clone(), row_exist: t.row_exist.clone().and(keep) })
            }
            Operator::Aggregate { group_by, .. } | Operator::SemanticAggregate { group_by, .. } => {
                if !self.opaque_unsupported {
                    return Err(SymError::Unsupported(op.label()));
                }
                let t = input(0)?;
                let tag = subtree_tag(plan, id);
                let mut cols = Vec::new();
                for g in group_by {
                    let hit = t.columns.iter().find(|c| c.matches(g)).ok_or_else(|| SymError::Unresolved(g.clone()))?;
                    cols.push(hit.clone());
                }
                let keys: Vec<Term> = cols.iter().map(|c| c.term.clone()).collect();
                let aliases: Vec<String> = match op {
                    Operator::Aggregate { aggs, .. } => aggs.iter().map(|a| a.alias.clone()).collect(),
                    Operator::SemanticAggregate { alias, .. } => vec![alias.clone()],
                    _ => unreachable!(),
                };
                for a in aliases {
                    cols.push(SymColumn {
                        qualifier: None,
                        name: a.clone(),
                        term: Term::Op { op: format!("agg#{tag}.{a}"), args: keys.clone() },
                    });
                }
                let row = Formula::Atom(Term::Op { op: format!("group#{tag}"), args: keys });
                Ok(SymbolicTable { columns: cols, row_exist: row })
            }
        }
    }
}

fn concat(l: &SymbolicTable, r: &SymbolicTable) -> Vec<SymColumn> {
    l.columns.iter().chain(r.columns.iter()).cloned().collect()
}

fn subtree_tag(plan: &QueryPlan, id: NodeId) -> String {
    let sig = plan.subtree(id).signature();
    hex::encode(&Sha256::digest(sig.as_bytes())[..4])
}

fn udf_term(udf: &LlmUdf, field: Option<&str>, t: &SymbolicTable) -> Result<Term, SymError> {
    let args = udf.inputs.iter().map(|c| t.resolve(c).cloned()).collect::<Result<Vec<_>, _>>()?;
    let func = match field {
        Some(f) => format!("{}.{f}", udf.function_key()),
        None => udf.function_key(),
    };
    Ok(Term::Udf { func, args })
}

/// Symbolic value of an expression over one row.
pub(crate) fn term(e: &Expr, t: &SymbolicTable) -> Result<Term, SymError> {
    Ok(match e {
        Expr::Literal(v) => Term::Lit(v.clone()),
        Expr::Column(c) => t.resolve(c)?.clone(),
        Expr::Neg(inner) => Term::Op { op: "neg".into(), args: vec![term(inner, t)?] },
        Expr::Binary { op, left, right } if !op.is_comparison() && !matches!(op, BinaryOp::And | BinaryOp::Or) => {
            Term::Op { op: op.symbol().into(), args: vec![term(left, t)?, term(right, t)?] }
        }
        Expr::Call { func, args } => Term::Op {
            op: func.name().into(),
            args: args.iter().map(|a| term(a, t)).collect::<Result<_, _>>()?,
        },
        _ => Term::Pred(Box::new(formula(e, t)?)),
    })
}

/// Symbolic truth of a predicate over one row.
pub(crate) fn formula(e: &Expr, t: &SymbolicTable) -> Result<Formula, SymError> {
    let cmp = |op, l: &Expr, r: &Expr| -> Result<Formula, SymError> {
        Ok(Formula::Cmp { op, left: term(l, t)?, right: term(r, t)? })
    };
    let negate = |f: Formula, negated: bool| if negated { Formula::Not(Box::new(f)) } else { f };
    Ok(match e {
        Expr::Literal(Value::Bool(b)) => Formula::Const(*b),
        Expr::Not(inner) => Formula::Not(Box::new(formula(inner, t)?)),
        Expr::Binary { op, left, right } => match op {
            BinaryOp::And => Formula::And(vec![formula(left, t)?, formula(right, t)?]),
            BinaryOp::Or => Formula::Or(vec![formula(left, t)?, formula(right, t)?]),
            BinaryOp::Eq => cmp(CmpOp::Eq, left, right)?,
            BinaryOp::Ne => cmp(CmpOp::Ne, left, right)?,
            BinaryOp::Lt => cmp(CmpOp::Lt, left, right)?,
            BinaryOp::Le => cmp(CmpOp::Le, left, right)?,
            BinaryOp::Gt => cmp(CmpOp::Lt, right, left)?,
            BinaryOp::Ge => cmp(CmpOp::Le, right, left)?,
            _ => Formula::Atom(term(e, t)?),
        },
        Expr::InList { expr, list, negated } => {
            let x = term(expr, t)?;
            let parts = list
                .iter()
                .map(|v| Ok(Formula::Cmp { op: CmpOp::Eq, left: x.clone(), right: term(v, t)? }))
                .collect::<Result<Vec<_>, SymError>>()?;
            negate(Formula::Or(parts), *negated)
        }
        Expr::Between { expr, low, high, negated } => {
            let x = term(expr, t)?;
            let f = Formula::And(vec![
                Formula::Cmp { op: CmpOp::Le, left: term(low, t)?, right: x.clone() },
                Formula::Cmp { op: CmpOp::Le, left: x, right: term(high, t)? },
            ]);
            negate(f, *negated)
        }
        Expr::IsNull { expr, negated } => {
            negate(Formula::Atom(Term::Op { op: "is_null".into(), args: vec![term(expr, t)?] }), *negated)
        }
        _ => Formula::Atom(term(e, t)?),
    })
}
