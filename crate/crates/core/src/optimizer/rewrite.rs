//! Relational rewrites: selection pushdown and greedy join ordering.

use crate::expr::Expr;
use crate::plan::{output_schema, Operator, PlanTree};
use crate::relation::{ColumnRef, Schema};

use super::cost::{cost_lt, estimate_node, estimate_tree, CostParams, NodeStats, Statistics};

fn schema_of(t: &PlanTree, stats: &Statistics) -> Option<Schema> {
    output_schema(&t.clone().into_plan(), stats).ok()
}

fn resolves(pred: &Expr, t: &PlanTree, stats: &Statistics) -> bool {
    match schema_of(t, stats) {
        Some(s) => pred.columns().iter().all(|c| s.resolve(c).is_ok()),
        None => false,
    }
}

/// Splits relational selections into conjuncts and sinks each one as far
/// down as its columns allow.
pub fn push_down_selections(t: PlanTree, stats: &Statistics) -> PlanTree {
    let PlanTree { op, inputs } = t;
    let inputs: Vec<PlanTree> = inputs.into_iter().map(|c| push_down_selections(c, stats)).collect();
    match op {
        Operator::Select { predicate } => {
            let mut out = inputs.into_iter().next().expect("select has an input");
            for conj in predicate.conjuncts() {
                out = sink(conj.clone(), out, stats);
            }
            out
        }
        op => PlanTree { op, inputs },
    }
}

fn sink(pred: Expr, mut t: PlanTree, stats: &Statistics) -> PlanTree {
    let sides: &[usize] = match &t.op {
        Operator::Join { .. } | Operator::SemanticJoin { .. } => &[0, 1],
        Operator::Select { .. }
        | Operator::SemanticSelect { .. }
        | Operator::Derive { .. }
        | Operator::SemanticProject { .. }
        | Operator::Project { .. } => &[0],
        _ => &[],
    };
    for &side in sides {
        if resolves(&pred, &t.inputs[side], stats) {
            let child = std::mem::replace(&mut t.inputs[side], PlanTree::scan(""));
            t.inputs[side] = sink(pred, child, stats);
            return t;
        }
    }
    wrap(pred, t)
}

fn wrap(pred: Expr, t: PlanTree) -> PlanTree {
    match t.op {
        Operator::Select { predicate } => PlanTree { op: Operator::Select { predicate: predicate.and(pred) }, inputs: t.inputs },
        op => PlanTree::unary(Operator::Select { predicate: pred }, PlanTree { op, inputs: t.inputs }),
    }
}

/// Reorders every cluster of three or more equi-joins left-deep, smallest
/// input first, adding the connected input with the smallest estimated
/// result next. A projection restores the original column order. The new
/// order is kept only when its estimated cost is lower.
pub fn reorder_joins(t: PlanTree, stats: &Statistics, params: &CostParams) -> PlanTree {
    let PlanTree { op, inputs } = t;
    let inputs: Vec<PlanTree> = inputs.into_iter().map(|c| reorder_joins(c, stats, params)).collect();
    let t = PlanTree { op, inputs };
    if !matches!(t.op, Operator::Join { .. }) {
        return t;
    }
    match greedy_order(&t, stats, params) {
        Some(better) => better,
        None => t,
    }
}

fn flatten(t: &PlanTree, leaves: &mut Vec<PlanTree>, pairs: &mut Vec<(ColumnRef, ColumnRef)>) {
    match &t.op {
        Operator::Join { on } => {
            flatten(&t.inputs[0], leaves, pairs);
            flatten(&t.inputs[1], leaves, pairs);
            pairs.extend(on.iter().cloned());
        }
        _ => leaves.push(t.clone()),
    }
}

fn greedy_order(t: &PlanTree, stats: &Statistics, params: &CostParams) -> Option<PlanTree> {
    let mut leaves = Vec::new();
    let mut pairs = Vec::new();
    flatten(t, &mut leaves, &mut pairs);
    if leaves.len() < 3 {
        return None;
    }
    let schemas: Vec<Schema> = leaves.iter().map(|l| schema_of(l, stats)).collect::<Option<_>>()?;
    let owner = |c: &ColumnRef| -> Option<usize> {
        let hits: Vec<usize> = (0..schemas.len()).filter(|i| schemas[*i].resolve(c).is_ok()).collect();
        match hits.as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    };
    let mut owned = Vec::new();
    for (a, b) in &pairs {
        let (oa, ob) = (owner(a)?, owner(b)?);
        if oa == ob {
            return None;
        }
        owned.push((oa, ob));
    }
    let leaf_stats: Vec<NodeStats> =
        leaves.iter().map(|l| estimate_tree(l, stats, params).ok().map(|(s, _)| s)).collect::<Option<_>>()?;

    let first = (0..leaves.len())
        .min_by(|a, b| leaf_stats[*a].card.total_cmp(&leaf_stats[*b].card).then(a.cmp(b)))?;
    let mut joined = vec![first];
    let mut tree = leaves[first].clone();
    let mut cur = leaf_stats[first].clone();
    let mut used = vec![false; pairs.len()];
    while joined.len() < leaves.len() {
        let connecting = |i: usize| -> Vec<usize> {
            (0..pairs.len())
                .filter(|p| !used[*p])
                .filter(|p| {
                    let (a, b) = owned[*p];
                    (a == i && joined.contains(&b)) || (b == i && joined.contains(&a))
                })
                .collect()
        };
        let remaining: Vec<usize> = (0..leaves.len()).filter(|i| !joined.contains(i)).collect();
        let connected: Vec<usize> = remaining.iter().copied().filter(|i| !connecting(*i).is_empty()).collect();
        let pool = if connected.is_empty() { remaining } else { connected };
        let mut best: Option<(f64, usize, Vec<(ColumnRef, ColumnRef)>, NodeStats)> = None;
        for i in pool {
            let on: Vec<(ColumnRef, ColumnRef)> = connecting(i)
                .into_iter()
                .map(|p| {
                    let (a, b) = pairs[p].clone();
                    if owned[p].0 == i { (b, a) } else { (a, b) }
                })
                .collect();
            let est = estimate_node(&Operator::Join { on: on.clone() }, &[&cur, &leaf_stats[i]], stats, params).ok()?;
            if best.as_ref().is_none_or(|b| est.card < b.0) {
                best = Some((est.card, i, on, est));
            }
        }
        let (_, i, on, est) = best?;
        for p in connecting(i) {
            used[p] = true;
        }
        tree = PlanTree::binary(Operator::Join { on }, tree, leaves[i].clone());
        cur = est;
        joined.push(i);
    }
    if used.iter().any(|u| !u) {
        return None;
    }
    let original = schema_of(t, stats)?;
    let reordered = schema_of(&tree, stats)?;
    if original != reordered {
        let columns = original.columns().iter().map(|c| c.reference()).collect();
        tree = PlanTree::unary(Operator::Project { columns }, tree);
    }
    let (_, before) = estimate_tree(t, stats, params).ok()?;
    let (_, after) = estimate_tree(&tree, stats, params).ok()?;
    cost_lt(after, before).then_some(tree)
}
