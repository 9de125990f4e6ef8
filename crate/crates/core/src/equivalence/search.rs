//! Bounded counterexample search over a two-value domain.
//!
//! Every symbol ranges over {0, 1} and every UDF over all functions from
//! {0, 1}^arity to {0, 1}. Any assignment is realizable by a concrete
//! one-row-per-table database and a deterministic model, so a distinguishing
//! assignment proves the plans differ. Formulas that mention literals or
//! interpreted functions are outside this fragment and are never searched.

use std::collections::BTreeMap;
use std::time::Instant;

use super::symbolic::{CmpOp, Formula, SymbolicTable, Term};
use super::SearchBudget;

struct Space {
    symbols: Vec<usize>,
    /// UDF name to (arity, offset of its table in the bit vector).
    funcs: BTreeMap<String, (usize, usize)>,
    bits: u32,
}

/// Returns a readable witness assignment when one exists within budget.
pub fn find_counterexample(l: &SymbolicTable, r: &SymbolicTable, budget: SearchBudget) -> Option<String> {
    if l.columns.len() != r.columns.len() {
        return Some("the plans have different output columns".into());
    }
    let mut syms = BTreeMap::new();
    let mut arities: BTreeMap<String, usize> = BTreeMap::new();
    let mut ok = true;
    let mut visit = |t: &Term| collect_term(t, &mut syms, &mut arities, &mut ok);
    for t in [l, r] {
        for c in &t.columns {
            visit(&c.term);
        }
    }
    for f in [&l.row_exist, &r.row_exist] {
        collect_formula(f, &mut syms, &mut arities, &mut ok);
    }
    if !ok {
        return None;
    }
    let mut offset = syms.len();
    let mut funcs = BTreeMap::new();
    let mut table_bits = 0u32;
    for (name, arity) in arities {
        if arity > 4 {
            return None;
        }
        let width = 1usize << arity;
        funcs.insert(name, (arity, offset));
        offset += width;
        table_bits += width as u32;
    }
    if table_bits > budget.max_udf_table_bits || offset as u32 > budget.max_bits {
        return None;
    }
    let space = Space { symbols: syms.into_keys().collect(), funcs, bits: offset as u32 };
    let start = Instant::now();
    for assignment in 0u64..(1u64 << space.bits) {
        if assignment % 1024 == 1023 && start.elapsed() > budget.time {
            return None;
        }
        let e1 = eval_formula(&l.row_exist, &space, assignment);
        let e2 = eval_formula(&r.row_exist, &space, assignment);
        let differs = e1 != e2
            || (e1
                && l.columns
                    .iter()
                    .zip(&r.columns)
                    .any(|(a, b)| eval_term(&a.term, &space, assignment) != eval_term(&b.term, &space, assignment)));
        if differs {
            return Some(describe(&space, assignment, e1, e2));
        }
    }
    None
}

fn collect_term(t: &Term, syms: &mut BTreeMap<usize, ()>, arities: &mut BTreeMap<String, usize>, ok: &mut bool) {
    match t {
        Term::Sym(n) => {
            syms.insert(*n, ());
        }
        Term::Udf { func, args } => {
            if *arities.entry(func.clone()).or_insert(args.len()) != args.len() {
                *ok = false;
            }
            for a in args {
                collect_term(a, syms, arities, ok);
            }
        }
        Term::Lit(_) | Term::Op { .. } | Term::Pred(_) => *ok = false,
    }
}

fn collect_formula(f: &Formula, syms: &mut BTreeMap<usize, ()>, arities: &mut BTreeMap<String, usize>, ok: &mut bool) {
    match f {
        Formula::Const(_) => {}
        Formula::And(ps) | Formula::Or(ps) => ps.iter().for_each(|p| collect_formula(p, syms, arities, ok)),
        Formula::Not(p) => collect_formula(p, syms, arities, ok),
        Formula::Cmp { left, right, .. } => {
            collect_term(left, syms, arities, ok);
            collect_term(right, syms, arities, ok);
        }
        Formula::Atom(t) => collect_term(t, syms, arities, ok),
    }
}

fn bit(assignment: u64, i: usize) -> u8 {
    ((assignment >> i) & 1) as u8
}

fn eval_term(t: &Term, space: &Space, a: u64) -> u8 {
    match t {
        Term::Sym(n) => {
            let i = space.symbols.binary_search(n).expect("collected");
            bit(a, i)
        }
        Term::Udf { func, args } => {
            let (_, offset) = space.funcs[func];
            let mut idx = 0usize;
            for (k, arg) in args.iter().enumerate() {
                idx |= (eval_term(arg, space, a) as usize) << k;
            }
            bit(a, offset + idx)
        }
        _ => unreachable!("outside the searchable fragment"),
    }
}

fn eval_formula(f: &Formula, space: &Space, a: u64) -> bool {
    match f {
        Formula::Const(b) => *b,
        Formula::And(ps) => ps.iter().all(|p| eval_formula(p, space, a)),
        Formula::Or(ps) => ps.iter().any(|p| eval_formula(p, space, a)),
        Formula::Not(p) => !eval_formula(p, space, a),
        Formula::Cmp { op, left, right } => {
            let (l, r) = (eval_term(left, space, a), eval_term(right, space, a));
            match op {
                CmpOp::Eq => l == r,
                CmpOp::Ne => l != r,
                CmpOp::Lt => l < r,
                CmpOp::Le => l <= r,
            }
        }
        Formula::Atom(t) => eval_term(t, space, a) == 1,
    }
}

fn describe(space: &Space, a: u64, e1: bool, e2: bool) -> String {
    let mut parts: Vec<String> = space.symbols.iter().enumerate().map(|(i, s)| format!("v{s}={}", bit(a, i))).collect();
    for (name, (arity, offset)) in &space.funcs {
        for idx in 0..(1usize << arity) {
            let args: Vec<String> = (0..*arity).map(|k| ((idx >> k) & 1).to_string()).collect();
            parts.push(format!("{name}({})={}", args.join(","), bit(a, offset + idx)));
        }
    }
    let rows = match (e1, e2) {
        (true, false) => "row exists only in plan 1",
        (false, true) => "row exists only in plan 2",
        _ => "row values differ",
    };
    format!("{} ({rows})", parts.join(", "))
}
