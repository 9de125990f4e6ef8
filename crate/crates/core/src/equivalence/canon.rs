//! Canonical forms for symbolic formulas.
//!
//! Rewrites preserve three-valued semantics: flattening and sorting of
//! AND/OR, constant folding, double negation, and operand ordering for the
//! symmetric comparisons.

use super::symbolic::{CmpOp, Formula, Term};

pub fn canonicalize(f: &Formula) -> Formula {
    match f {
        Formula::Const(b) => Formula::Const(*b),
        Formula::And(parts) => junction(parts, true),
        Formula::Or(parts) => junction(parts, false),
        Formula::Not(inner) => match canonicalize(inner) {
            Formula::Const(b) => Formula::Const(!b),
            Formula::Not(x) => *x,
            Formula::Cmp { op: CmpOp::Eq, left, right } => Formula::Cmp { op: CmpOp::Ne, left, right },
            Formula::Cmp { op: CmpOp::Ne, left, right } => Formula::Cmp { op: CmpOp::Eq, left, right },
            other => Formula::Not(Box::new(other)),
        },
        Formula::Cmp { op, left, right } => {
            let (l, r) = (canonical_term(left), canonical_term(right));
            match op {
                CmpOp::Eq | CmpOp::Ne if l.to_string() > r.to_string() => Formula::Cmp { op: *op, left: r, right: l },
                _ => Formula::Cmp { op: *op, left: l, right: r },
            }
        }
        Formula::Atom(t) => match canonical_term(t) {
            Term::Pred(p) => *p,
            t => Formula::Atom(t),
        },
    }
}

fn junction(parts: &[Formula], is_and: bool) -> Formula {
    let mut flat = Vec::new();
    for p in parts {
        match canonicalize(p) {
            Formula::Const(b) if b == is_and => {}
            Formula::Const(b) => return Formula::Const(b),
            Formula::And(inner) if is_and => flat.extend(inner),
            Formula::Or(inner) if !is_and => flat.extend(inner),
            other => flat.push(other),
        }
    }
    let mut keyed: Vec<(String, Formula)> = flat.into_iter().map(|f| (f.to_string(), f)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.1 == b.1);
    let mut flat: Vec<Formula> = keyed.into_iter().map(|(_, f)| f).collect();
    match flat.len() {
        0 => Formula::Const(is_and),
        1 => flat.pop().unwrap(),
        _ if is_and => Formula::And(flat),
        _ => Formula::Or(flat),
    }
}

pub fn canonical_term(t: &Term) -> Term {
    match t {
        Term::Sym(_) | Term::Lit(_) => t.clone(),
        Term::Udf { func, args } => Term::Udf { func: func.clone(), args: args.iter().map(canonical_term).collect() },
        Term::Op { op, args } => Term::Op { op: op.clone(), args: args.iter().map(canonical_term).collect() },
        Term::Pred(p) => Term::Pred(Box::new(canonicalize(p))),
    }
}
