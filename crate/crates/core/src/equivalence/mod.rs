//! Plan equivalence by symbolic execution.
//!
//! Each base table is one symbolic row of fresh symbols plus a row-exist
//! formula. Operators transform that row: selections conjoin predicates,
//! joins concatenate rows and conjoin key equalities, projections keep or
//! append column terms. LLM UDFs are uninterpreted functions. Two plans are
//! equivalent when their output rows have the same columns and terms and
//! their row-exist formulas are equal after canonicalization.

mod canon;
mod search;
mod symbolic;

use std::fmt;
use std::time::Duration;

use crate::plan::QueryPlan;

pub use canon::canonicalize;
pub use search::find_counterexample;
pub use symbolic::{
    symbolic_execute, BaseTables, CmpOp, Formula, SymColumn, SymError, SymbolicExecutor, SymbolicTable, Term,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Equivalent,
    NotEquivalent,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Equivalent => "equivalent",
            Verdict::NotEquivalent => "not_equivalent",
            Verdict::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EquivalenceResult {
    pub verdict: Verdict,
    pub reason: String,
    pub left: Option<SymbolicTable>,
    pub right: Option<SymbolicTable>,
}

impl fmt::Display for EquivalenceResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = &self.left {
            writeln!(f, "  plan 1: {l}")?;
        }
        if let Some(r) = &self.right {
            writeln!(f, "  plan 2: {r}")?;
        }
        write!(f, "  verdict: {} ({})", self.verdict, self.reason)
    }
}

/// Budget for the counterexample search.
#[derive(Debug, Clone, Copy)]
pub struct SearchBudget {
    /// Maximum number of enumerated bits (symbols plus UDF table entries).
    pub max_bits: u32,
    pub max_udf_table_bits: u32,
    pub time: Duration,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_bits: 20, max_udf_table_bits: 16, time: Duration::from_millis(100) }
    }
}

/// Anything that can judge whether two plans are equivalent.
pub trait EquivalenceOracle: Sync {
    fn check(&self, p1: &QueryPlan, p2: &QueryPlan, base: &BaseTables) -> EquivalenceResult;
}

/// The symbolic checker with a bounded counterexample search.
#[derive(Debug, Clone, Copy, Default)]
pub struct SymbolicChecker {
    pub budget: SearchBudget,
}

impl EquivalenceOracle for SymbolicChecker {
    fn check(&self, p1: &QueryPlan, p2: &QueryPlan, base: &BaseTables) -> EquivalenceResult {
        check_with_base(p1, p2, base, self.budget)
    }
}

/// Checks two plans over catalog tables.
pub fn check_equivalence(
    p1: &QueryPlan,
    p2: &QueryPlan,
    catalog: &dyn crate::plan::SchemaProvider,
) -> EquivalenceResult {
    match BaseTables::for_plans(&[p1, p2], catalog) {
        Ok(base) => check_with_base(p1, p2, &base, SearchBudget::default()),
        Err(e) => EquivalenceResult { verdict: Verdict::Unknown, reason: e.to_string(), left: None, right: None },
    }
}

pub fn check_with_base(p1: &QueryPlan, p2: &QueryPlan, base: &BaseTables, budget: SearchBudget) -> EquivalenceResult {
    let exec = SymbolicExecutor { opaque_unsupported: true };
    let (l, r) = (exec.run(p1, base), exec.run(p2, base));
    let (l, r) = match (l, r) {
        (Ok(l), Ok(r)) => (l, r),
        (l, r) => {
            let err = l.as_ref().err().or(r.as_ref().err()).unwrap().clone();
            let verdict = match err {
                // A UDF or predicate argument that no longer resolves means the
                // rewritten plan reads a column that is not there.
                SymError::Unresolved(_) | SymError::Ambiguous(_) => Verdict::NotEquivalent,
                _ => Verdict::Unknown,
            };
            return EquivalenceResult { verdict, reason: err.to_string(), left: l.ok(), right: r.ok() };
        }
    };
    let names = |t: &SymbolicTable| t.columns.iter().map(|c| (c.qualifier.clone(), c.name.clone())).collect::<Vec<_>>();
    if names(&l) != names(&r) {
        return EquivalenceResult {
            verdict: Verdict::NotEquivalent,
            reason: "output columns differ".into(),
            left: Some(l),
            right: Some(r),
        };
    }
    let (cl, cr) = (l.canonical(), r.canonical());
    if cl == cr {
        return EquivalenceResult {
            verdict: Verdict::Equivalent,
            reason: "output rows and row-exist formulas match".into(),
            left: Some(cl),
            right: Some(cr),
        };
    }
    match find_counterexample(&cl, &cr, budget) {
        Some(witness) => EquivalenceResult {
            verdict: Verdict::NotEquivalent,
            reason: format!("counterexample: {witness}"),
            left: Some(cl),
            right: Some(cr),
        },
        None => EquivalenceResult {
            verdict: Verdict::Unknown,
            reason: "canonical forms differ and no counterexample was found within budget".into(),
            left: Some(cl),
            right: Some(cr),
        },
    }
}

#[cfg(test)]
mod tests;
