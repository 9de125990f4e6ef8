//! Placement of movable LLM operators by dynamic programming.
//!
//! Semantic selections and projections are lifted out of the plan, leaving a
//! skeleton of the remaining operators. Each movable operator may sit on the
//! edge above any skeleton node it can reach through approved commutations,
//! and operators that do not commute with each other keep their original
//! relative position. The DP computes, for every skeleton node `v` and set
//! `S` of movable operators placed in the subtree of `v` (including the edge
//! above `v`), the cheapest arrangement. Cardinalities depend only on which
//! operators a subtree contains, so the optimum for `(v, S)` composes.

use std::collections::HashMap;

use crate::equivalence::{BaseTables, EquivalenceOracle, EquivalenceResult, Verdict};
use crate::plan::{node_schemas, NodeId, OpClass, Operator, PlanTree, QueryPlan, SchemaError};
use crate::relation::{Column, Schema};

use super::cost::{cost_eq, cost_lt, estimate_node, CostParams, NodeStats, Statistics};

/// Placement is skipped above this many movable operators.
pub const MAX_MOVABLE: usize = 6;

#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub description: String,
    pub result: EquivalenceResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    /// The first operator was originally above the second.
    Above,
    Below,
    Incomparable,
}

#[derive(Debug, Clone)]
pub struct SkeletonNode {
    pub op: Operator,
    pub children: Vec<usize>,
    /// The node in the original plan.
    pub original: NodeId,
}

/// The skeleton, the movable operators and the approvals that constrain
/// where they may go.
#[derive(Debug, Clone)]
pub struct PlacementProblem {
    /// Skeleton nodes in postorder; the last one is the root.
    pub skeleton: Vec<SkeletonNode>,
    pub movable: Vec<Operator>,
    /// Original chain of movable operators above each skeleton node, bottom first.
    pub original: Vec<Vec<usize>>,
    approved: Vec<Vec<bool>>,
    commute: Vec<Vec<bool>>,
    relation: Vec<Vec<Relation>>,
    pub checks: Vec<CheckRecord>,
}

/// A placement: the chain of movable operators above each skeleton node,
/// bottom first.
pub type Assignment = Vec<Vec<usize>>;

impl PlacementProblem {
    pub fn new(plan: &QueryPlan, stats: &Statistics, oracle: &dyn EquivalenceOracle) -> Result<Self, SchemaError> {
        let schemas = node_schemas(plan, stats).map_err(|(_, e)| e)?;
        let mut p = PlacementProblem {
            skeleton: Vec::new(),
            movable: Vec::new(),
            original: Vec::new(),
            approved: Vec::new(),
            commute: Vec::new(),
            relation: Vec::new(),
            checks: Vec::new(),
        };
        let mut movable_nodes = Vec::new();
        p.walk(plan, plan.root(), &mut movable_nodes);
        let n_ops = p.movable.len();
        if n_ops == 0 || n_ops > MAX_MOVABLE {
            return Ok(p);
        }

        // Original ancestor relation between movable operators.
        let mut below: Vec<Vec<NodeId>> = vec![Vec::new(); plan.len()];
        for id in plan.postorder() {
            let mut acc = Vec::new();
            for c in plan.children(id) {
                acc.push(*c);
                acc.extend(below[c.0].iter().copied());
            }
            below[id.0] = acc;
        }
        p.relation = (0..n_ops)
            .map(|a| {
                (0..n_ops)
                    .map(|b| {
                        let (na, nb) = (movable_nodes[a], movable_nodes[b]);
                        if below[na.0].contains(&nb) {
                            Relation::Above
                        } else if below[nb.0].contains(&na) {
                            Relation::Below
                        } else {
                            Relation::Incomparable
                        }
                    })
                    .collect()
            })
            .collect();

        // Pairwise commutation.
        p.commute = vec![vec![true; n_ops]; n_ops];
        for a in 0..n_ops {
            for b in (a + 1)..n_ops {
                let input = match p.relation[a][b] {
                    Relation::Above => schemas[plan.children(movable_nodes[a])[0].0].clone(),
                    Relation::Below => schemas[plan.children(movable_nodes[b])[0].0].clone(),
                    Relation::Incomparable => {
                        let lca = lowest_common_ancestor(plan, movable_nodes[a], movable_nodes[b]);
                        schemas[lca.0].clone()
                    }
                };
                let input = strip_outputs(&strip_outputs(&input, &p.movable[a]), &p.movable[b]);
                let (ma, mb) = (p.movable[a].clone(), p.movable[b].clone());
                let x = PlanTree::unary(ma.clone(), PlanTree::unary(mb.clone(), opaque(0)));
                let y = PlanTree::unary(mb, PlanTree::unary(ma, opaque(0)));
                let ok = p.record(
                    format!("swap {} and {}", p.movable[a].label(), p.movable[b].label()),
                    oracle,
                    x,
                    y,
                    &[input],
                );
                p.commute[a][b] = ok;
                p.commute[b][a] = ok;
            }
        }

        // Crossing approvals, memoized per (operator, skeleton node, side).
        let n = p.skeleton.len();
        let mut parent = vec![usize::MAX; n];
        for (i, s) in p.skeleton.iter().enumerate() {
            for c in &s.children {
                parent[*c] = i;
            }
        }
        let home: Vec<usize> = (0..n_ops)
            .map(|m| p.original.iter().position(|chain| chain.contains(&m)).expect("placed"))
            .collect();
        let mut crossing: HashMap<(usize, usize, usize), bool> = HashMap::new();
        p.approved = vec![vec![false; n]; n_ops];
        for m in 0..n_ops {
            for target in 0..n {
                let path = crossing_path(&p.skeleton, &parent, home[m], target);
                let mut ok = true;
                for (s, side) in path {
                    let v = match crossing.get(&(m, s, side)) {
                        Some(v) => *v,
                        None => {
                            let v = p.check_crossing(plan, &schemas, m, s, side, oracle);
                            crossing.insert((m, s, side), v);
                            v
                        }
                    };
                    if !v {
                        ok = false;
                        break;
                    }
                }
                p.approved[m][target] = ok;
            }
        }
        Ok(p)
    }

    fn walk(&mut self, plan: &QueryPlan, id: NodeId, movable_nodes: &mut Vec<NodeId>) -> usize {
        let op = plan.op(id);
        if is_movable(op) {
            let below = self.walk(plan, plan.children(id)[0], movable_nodes);
            self.movable.push(op.clone());
            movable_nodes.push(id);
            self.original[below].push(self.movable.len() - 1);
            return below;
        }
        let children = plan.children(id).iter().map(|c| self.walk(plan, *c, movable_nodes)).collect();
        self.skeleton.push(SkeletonNode { op: op.clone(), children, original: id });
        self.original.push(Vec::new());
        self.skeleton.len() - 1
    }

    fn check_crossing(
        &mut self,
        plan: &QueryPlan,
        schemas: &[Schema],
        m: usize,
        s: usize,
        side: usize,
        oracle: &dyn EquivalenceOracle,
    ) -> bool {
        let node = &self.skeleton[s];
        let inputs: Vec<Schema> = plan
            .children(node.original)
            .iter()
            .map(|c| strip_outputs(&schemas[c.0], &self.movable[m]))
            .collect();
        let op = self.movable[m].clone();
        let leaves = |with: Option<usize>| -> Vec<PlanTree> {
            (0..inputs.len())
                .map(|i| if Some(i) == with { PlanTree::unary(op.clone(), opaque(i)) } else { opaque(i) })
                .collect()
        };
        let above = PlanTree::unary(op.clone(), PlanTree { op: node.op.clone(), inputs: leaves(None) });
        let pushed = PlanTree { op: node.op.clone(), inputs: leaves(Some(side)) };
        let description = format!("move {} across {} (input {})", op.label(), node.op.label(), side);
        self.record(description, oracle, above, pushed, &inputs)
    }

    fn record(&mut self, description: String, oracle: &dyn EquivalenceOracle, x: PlanTree, y: PlanTree, inputs: &[Schema]) -> bool {
        let mut base = BaseTables::new();
        for (i, s) in inputs.iter().enumerate() {
            base.add_table(&opaque_name(i), s);
        }
        let result = oracle.check(&x.into_plan(), &y.into_plan(), &base);
        let ok = result.verdict == Verdict::Equivalent;
        self.checks.push(CheckRecord { description, result });
        ok
    }

    pub fn is_trivial(&self) -> bool {
        self.movable.is_empty() || self.movable.len() > MAX_MOVABLE
    }

    pub fn approved(&self, op: usize, node: usize) -> bool {
        self.approved[op][node]
    }

    pub fn commutes(&self, a: usize, b: usize) -> bool {
        self.commute[a][b]
    }

    /// Checks approvals and pairwise order constraints; structural validity
    /// is left to the caller.
    pub fn respects_constraints(&self, assignment: &Assignment) -> bool {
        let n_ops = self.movable.len();
        let mut seen = vec![0usize; n_ops];
        for (u, chain) in assignment.iter().enumerate() {
            for m in chain {
                if *m >= n_ops || !self.approved[*m][u] {
                    return false;
                }
                seen[*m] += 1;
            }
        }
        if seen.iter().any(|c| *c != 1) {
            return false;
        }
        let below = self.below_sets(assignment);
        (0..n_ops).all(|m| self.pair_ok(m, below[m]))
    }

    fn pair_ok(&self, m: usize, below: u64) -> bool {
        (0..self.movable.len()).all(|o| {
            if o == m || self.commute[m][o] {
                return true;
            }
            let has = below & (1 << o) != 0;
            match self.relation[m][o] {
                Relation::Above => has,
                Relation::Below | Relation::Incomparable => !has,
            }
        })
    }

    /// For every movable operator, the set of movable operators beneath it.
    fn below_sets(&self, assignment: &Assignment) -> Vec<u64> {
        let mut sub = vec![0u64; self.skeleton.len()];
        let mut out = vec![0u64; self.movable.len()];
        for u in 0..self.skeleton.len() {
            let mut acc = 0u64;
            for c in &self.skeleton[u].children {
                acc |= sub[*c];
            }
            for m in &assignment[u] {
                out[*m] = acc;
                acc |= 1 << m;
            }
            sub[u] = acc;
        }
        out
    }

    /// Builds the plan for an assignment.
    pub fn build(&self, assignment: &Assignment) -> QueryPlan {
        self.build_tree(assignment, self.skeleton.len() - 1).into_plan()
    }

    fn build_tree(&self, assignment: &Assignment, u: usize) -> PlanTree {
        let node = &self.skeleton[u];
        let mut t = PlanTree {
            op: node.op.clone(),
            inputs: node.children.iter().map(|c| self.build_tree(assignment, *c)).collect(),
        };
        for m in &assignment[u] {
            t = PlanTree::unary(self.movable[*m].clone(), t);
        }
        t
    }

    fn contains_join(&self, u: usize) -> bool {
        self.skeleton[u].op.class() == OpClass::Join || self.skeleton[u].children.iter().any(|c| self.contains_join(*c))
    }
}

fn is_movable(op: &Operator) -> bool {
    matches!(op, Operator::SemanticSelect { .. } | Operator::SemanticProject { .. })
}

fn opaque_name(i: usize) -> String {
    format!("$in{i}")
}

fn opaque(i: usize) -> PlanTree {
    PlanTree::scan(&opaque_name(i))
}

/// The schema without the columns `op` appends.
fn strip_outputs(schema: &Schema, op: &Operator) -> Schema {
    let outputs: &[String] = match op {
        Operator::SemanticProject { outputs, .. } => outputs,
        _ => return schema.clone(),
    };
    let cols: Vec<Column> = schema
        .columns()
        .iter()
        .filter(|c| !(c.qualifier.is_none() && outputs.contains(&c.name)))
        .cloned()
        .collect();
    Schema::new(cols).expect("subset of a valid schema")
}

fn lowest_common_ancestor(plan: &QueryPlan, a: NodeId, b: NodeId) -> NodeId {
    let parents = plan.parents();
    let chain = |mut x: NodeId| {
        let mut v = vec![x];
        while let Some(p) = parents.get(&x) {
            v.push(*p);
            x = *p;
        }
        v
    };
    let ca = chain(a);
    let cb = chain(b);
    *ca.iter().find(|x| cb.contains(x)).unwrap_or(&plan.root())
}

/// Skeleton nodes crossed, with the input side, when moving from the edge
/// above `from` to the edge above `to`.
fn crossing_path(skeleton: &[SkeletonNode], parent: &[usize], from: usize, to: usize) -> Vec<(usize, usize)> {
    let is_ancestor_or_self = |a: usize, mut x: usize| loop {
        if x == a {
            return true;
        }
        if parent[x] == usize::MAX {
            return false;
        }
        x = parent[x];
    };
    let mut path = Vec::new();
    let mut x = from;
    while !is_ancestor_or_self(x, to) {
        let p = parent[x];
        let side = skeleton[p].children.iter().position(|c| *c == x).expect("child");
        path.push((p, side));
        x = p;
    }
    while x != to {
        let side = skeleton[x]
            .children
            .iter()
            .position(|c| is_ancestor_or_self(*c, to))
            .expect("descendant");
        path.push((x, side));
        x = skeleton[x].children[side];
    }
    path
}

#[derive(Debug, Clone)]
struct Entry {
    cost: f64,
    tie: u32,
    stats: NodeStats,
    chain: Vec<usize>,
    child_sets: Vec<u64>,
}

/// Result of the placement search.
#[derive(Debug, Clone)]
pub struct Placement {
    pub assignment: Assignment,
    pub plan: QueryPlan,
    pub cost: f64,
}

/// Cheapest placement for a non-trivial problem.
pub fn solve(problem: &PlacementProblem, stats: &Statistics, params: &CostParams) -> Option<Placement> {
    let n = problem.skeleton.len();
    let n_ops = problem.movable.len();
    let full: u64 = (1u64 << n_ops) - 1;
    let mut allowed = vec![0u64; n];
    let mut here = vec![0u64; n];
    for u in 0..n {
        here[u] = (0..n_ops).filter(|m| problem.approved[*m][u]).fold(0, |acc, m| acc | 1 << m);
        allowed[u] = problem.skeleton[u].children.iter().fold(here[u], |acc, c| acc | allowed[*c]);
    }
    let mut memo: Vec<HashMap<u64, Entry>> = vec![HashMap::new(); n];
    for u in 0..n {
        let node = &problem.skeleton[u];
        let join_below = problem.contains_join(u);
        let mut table: HashMap<u64, Entry> = HashMap::new();
        for set in submasks(allowed[u]) {
            let mut best: Option<Entry> = None;
            for on_edge in submasks(set & here[u]) {
                let rest = set & !on_edge;
                for child_sets in splits(rest, &node.children, &allowed) {
                    let entries: Option<Vec<&Entry>> =
                        node.children.iter().zip(&child_sets).map(|(c, s)| memo[*c].get(s)).collect();
                    let Some(entries) = entries else { continue };
                    let inputs: Vec<&NodeStats> = entries.iter().map(|e| &e.stats).collect();
                    let Ok(own) = estimate_node(&node.op, &inputs, stats, params) else { continue };
                    let base_cost = entries.iter().map(|e| e.cost).sum::<f64>() + own.cost;
                    let base_tie = entries.iter().map(|e| e.tie).sum::<u32>();
                    let ops: Vec<usize> = (0..n_ops).filter(|m| on_edge & (1 << m) != 0).collect();
                    for order in permutations(&ops) {
                        let mut cost = base_cost;
                        let mut tie = base_tie;
                        let mut cur = own.clone();
                        let mut below = rest;
                        let mut ok = true;
                        for m in &order {
                            if !problem.pair_ok(*m, below) {
                                ok = false;
                                break;
                            }
                            match estimate_node(&problem.movable[*m], &[&cur], stats, params) {
                                Ok(s) => {
                                    cost += s.cost;
                                    cur = s;
                                }
                                Err(_) => {
                                    ok = false;
                                    break;
                                }
                            }
                            tie += u32::from(join_below);
                            below |= 1 << m;
                        }
                        if !ok {
                            continue;
                        }
                        let better = match &best {
                            None => true,
                            Some(b) => cost_lt(cost, b.cost) || (cost_eq(cost, b.cost) && tie < b.tie),
                        };
                        if better {
                            best = Some(Entry { cost, tie, stats: cur, chain: order.clone(), child_sets: child_sets.clone() });
                        }
                    }
                }
            }
            if let Some(b) = best {
                table.insert(set, b);
            }
        }
        memo[u] = table;
    }
    let root = n - 1;
    let top = memo[root].get(&full)?;
    let mut assignment: Assignment = vec![Vec::new(); n];
    let mut stack = vec![(root, full)];
    while let Some((u, set)) = stack.pop() {
        let e = &memo[u][&set];
        assignment[u] = e.chain.clone();
        for (c, s) in problem.skeleton[u].children.iter().zip(&e.child_sets) {
            stack.push((*c, *s));
        }
    }
    Some(Placement { plan: problem.build(&assignment), cost: top.cost, assignment })
}

/// All submasks of `mask`, ascending.
fn submasks(mask: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut s = 0u64;
    loop {
        out.push(s);
        if s == mask {
            break;
        }
        s = (s.wrapping_sub(mask)) & mask;
    }
    out
}

/// Ways to hand `rest` to the children, each within what it allows.
fn splits(rest: u64, children: &[usize], allowed: &[u64]) -> Vec<Vec<u64>> {
    match children {
        [] => {
            if rest == 0 {
                vec![vec![]]
            } else {
                vec![]
            }
        }
        [c] => {
            if rest & !allowed[*c] == 0 {
                vec![vec![rest]]
            } else {
                vec![]
            }
        }
        [l, r] => submasks(rest & allowed[*l])
            .into_iter()
            .filter(|left| (rest & !left) & !allowed[*r] == 0)
            .map(|left| vec![left, rest & !left])
            .collect(),
        _ => vec![],
    }
}

/// Permutations in lexicographic order of positions.
pub(crate) fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let mut out = vec![idx.iter().map(|i| items[*i]).collect::<Vec<_>>()];
    loop {
        let Some(i) = (1..idx.len()).rev().find(|&i| idx[i - 1] < idx[i]) else { break };
        let j = (i..idx.len()).rev().find(|&j| idx[j] > idx[i - 1]).expect("pivot");
        idx.swap(i - 1, j);
        idx[i..].reverse();
        out.push(idx.iter().map(|i| items[*i]).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submasks_cover_all() {
        assert_eq!(submasks(0b101), vec![0, 1, 4, 5]);
        assert_eq!(submasks(0), vec![0]);
    }

    #[test]
    fn permutations_are_complete() {
        let p = permutations(&[3, 5, 7]);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![3, 5, 7]);
        assert_eq!(p[5], vec![7, 5, 3]);
        assert_eq!(permutations(&[]), vec![Vec::<usize>::new()]);
    }
}
