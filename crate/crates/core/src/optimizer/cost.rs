//! Cost model.
//!
//! Relational operators cost a per-row constant times their input size; every
//! LLM call costs a large constant. Cardinalities use textbook independence
//! estimates computed from base-table statistics only, so the output size of
//! a subtree depends on which operators it contains and not on their order.
//! Distinct input combinations at a node, which determine LLM call counts,
//! are estimated with Yao's formula from that size.

use std::collections::BTreeMap;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::expr::{BinaryOp, Expr};
use crate::plan::{schema_for, NodeId, Operator, PlanTree, QueryPlan, SchemaError, SchemaProvider};
use crate::relation::{ColumnRef, Database, Schema};
use crate::udf::LlmUdf;
use crate::value::Value;

/// Relative tolerance for cost comparisons.
pub const COST_EPSILON: f64 = 1e-9;

pub fn cost_lt(a: f64, b: f64) -> bool {
    a < b - COST_EPSILON * a.abs().max(b.abs()).max(1.0)
}

pub fn cost_eq(a: f64, b: f64) -> bool {
    !cost_lt(a, b) && !cost_lt(b, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub scan: f64,
    pub select: f64,
    pub project: f64,
    pub join: f64,
    pub topk: f64,
    pub aggregate: f64,
    pub llm_call: f64,
    pub semantic_select_selectivity: f64,
    pub semantic_join_selectivity: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            scan: 0.01,
            select: 0.01,
            project: 0.01,
            join: 0.02,
            topk: 0.01,
            aggregate: 0.01,
            llm_call: 100.0,
            semantic_select_selectivity: 0.5,
            semantic_join_selectivity: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableStats {
    pub schema: Schema,
    pub rows: f64,
    /// Non-null distinct values per column name (at least 1).
    pub distinct: BTreeMap<String, f64>,
}

/// Base-table statistics; also serves as the schema catalog for estimation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Statistics {
    pub tables: BTreeMap<String, TableStats>,
}

impl Statistics {
    pub fn from_database(db: &Database) -> Self {
        let mut tables = BTreeMap::new();
        for rel in db.relations() {
            let mut distinct = BTreeMap::new();
            for (i, col) in rel.schema.columns().iter().enumerate() {
                let set: HashSet<&Value> = rel.rows.iter().map(|r| &r[i]).filter(|v| !v.is_null()).collect();
                distinct.insert(col.name.clone(), (set.len() as f64).max(1.0));
            }
            tables.insert(
                rel.name.clone(),
                TableStats { schema: rel.schema.clone(), rows: rel.rows.len() as f64, distinct },
            );
        }
        Statistics { tables }
    }
}

impl SchemaProvider for Statistics {
    fn table_schema(&self, table: &str) -> Option<Schema> {
        self.tables.get(table).map(|t| t.schema.clone())
    }
}

/// Where a column's values come from: `distinct` values spread over `rows`
/// rows of its source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Origin {
    pub distinct: f64,
    pub rows: f64,
}

/// Estimated properties of one node's output.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub schema: Schema,
    pub origins: Vec<Origin>,
    pub card: f64,
    /// Cost of this node alone.
    pub cost: f64,
    pub llm_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeCost {
    pub node: NodeId,
    pub label: String,
    pub card: f64,
    pub cost: f64,
    pub llm_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub total: f64,
    pub relational: f64,
    pub llm_calls: f64,
    pub nodes: Vec<NodeCost>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot estimate node {node}: {source}")]
pub struct CostError {
    pub node: NodeId,
    #[source]
    pub source: SchemaError,
}

/// Expected distinct values among `card` rows drawn from `rows` rows holding
/// `distinct` values.
pub fn yao(distinct: f64, card: f64, rows: f64) -> f64 {
    if card <= 0.0 || distinct <= 0.0 {
        return 0.0;
    }
    let est = if rows <= 0.0 || card >= rows {
        distinct
    } else {
        distinct * (1.0 - (1.0 - card / rows).powf(rows / distinct))
    };
    est.min(card).max(card.min(1.0))
}

/// Distinct combinations of `cols` among `card` rows.
fn distinct_combinations(origins: &[Origin], card: f64) -> f64 {
    if card <= 0.0 {
        return 0.0;
    }
    let prod: f64 = origins.iter().map(|o| yao(o.distinct, card, o.rows)).product();
    prod.min(card).max(card.min(1.0))
}

fn lookup(schema: &Schema, origins: &[Origin], c: &ColumnRef) -> Result<Origin, SchemaError> {
    Ok(origins[schema.resolve(c)?])
}

fn derived_origin(parts: &[Origin]) -> Origin {
    if parts.is_empty() {
        return Origin { distinct: 1.0, rows: 1.0 };
    }
    let rows = parts.iter().map(|o| o.rows).fold(0.0, f64::max);
    let distinct: f64 = parts.iter().map(|o| o.distinct).product();
    Origin { distinct: distinct.min(rows).max(1.0), rows }
}

fn udf_origins(udf: &LlmUdf, schema: &Schema, origins: &[Origin]) -> Result<Vec<Origin>, SchemaError> {
    udf.inputs.iter().map(|c| lookup(schema, origins, c)).collect()
}

/// Fraction of rows satisfying a relational predicate.
pub fn selectivity(e: &Expr, schema: &Schema, origins: &[Origin]) -> f64 {
    let d = |x: &Expr| -> Option<f64> {
        match x {
            Expr::Column(c) => schema.resolve(c).ok().map(|i| origins[i].distinct.max(1.0)),
            _ => None,
        }
    };
    let eq = |l: &Expr, r: &Expr| -> f64 {
        match (d(l), d(r)) {
            (Some(a), Some(b)) => 1.0 / a.max(b),
            (Some(a), None) | (None, Some(a)) => 1.0 / a,
            (None, None) => 0.1,
        }
    };
    match e {
        Expr::Literal(Value::Bool(b)) => f64::from(u8::from(*b)),
        Expr::Not(inner) => 1.0 - selectivity(inner, schema, origins),
        Expr::Binary { op, left, right } => match op {
            BinaryOp::And => selectivity(left, schema, origins) * selectivity(right, schema, origins),
            BinaryOp::Or => {
                let (a, b) = (selectivity(left, schema, origins), selectivity(right, schema, origins));
                a + b - a * b
            }
            BinaryOp::Eq => eq(left, right),
            BinaryOp::Ne => 1.0 - eq(left, right),
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 1.0 / 3.0,
            _ => 0.5,
        },
        Expr::InList { expr, list, negated } => {
            let s = match d(expr) {
                Some(dv) => (list.len() as f64 / dv).min(1.0),
                None => 0.5,
            };
            if *negated { 1.0 - s } else { s }
        }
        Expr::Between { negated, .. } => {
            if *negated { 2.0 / 3.0 } else { 1.0 / 3.0 }
        }
        Expr::IsNull { negated, .. } => {
            if *negated { 0.9 } else { 0.1 }
        }
        _ => 0.5,
    }
}

/// Estimates one node from its inputs' estimates.
pub fn estimate_node(
    op: &Operator,
    inputs: &[&NodeStats],
    stats: &Statistics,
    params: &CostParams,
) -> Result<NodeStats, SchemaError> {
    let schemas: Vec<&Schema> = inputs.iter().map(|s| &s.schema).collect();
    let schema = schema_for(op, &schemas, stats)?;
    let input = |i: usize| -> Result<&NodeStats, SchemaError> {
        inputs.get(i).copied().ok_or_else(|| SchemaError::Invalid("missing input".into()))
    };
    let same = |s: &NodeStats, card: f64, cost: f64, calls: f64| NodeStats {
        schema: schema.clone(),
        origins: s.origins.clone(),
        card,
        cost,
        llm_calls: calls,
    };
    Ok(match op {
        Operator::Scan { table } => {
            let t = stats.tables.get(table).ok_or_else(|| SchemaError::UnknownTable(table.clone()))?;
            let origins = t
                .schema
                .columns()
                .iter()
                .map(|c| Origin { distinct: t.distinct.get(&c.name).copied().unwrap_or(1.0), rows: t.rows })
                .collect();
            NodeStats { schema, origins, card: t.rows, cost: params.scan * t.rows, llm_calls: 0.0 }
        }
        Operator::Select { predicate } => {
            let s = input(0)?;
            let sel = selectivity(predicate, &s.schema, &s.origins);
            same(s, s.card * sel, params.select * s.card, 0.0)
        }
        Operator::SemanticSelect { udf } => {
            let s = input(0)?;
            let calls = distinct_combinations(&udf_origins(udf, &s.schema, &s.origins)?, s.card);
            same(
                s,
                s.card * params.semantic_select_selectivity,
                params.select * s.card + params.llm_call * calls,
                calls,
            )
        }
        Operator::Project { columns } => {
            let s = input(0)?;
            let origins = columns.iter().map(|c| lookup(&s.schema, &s.origins, c)).collect::<Result<_, _>>()?;
            NodeStats { schema, origins, card: s.card, cost: params.project * s.card, llm_calls: 0.0 }
        }
        Operator::Derive { expr, .. } => {
            let s = input(0)?;
            let parts = expr.columns().into_iter().map(|c| lookup(&s.schema, &s.origins, c)).collect::<Result<Vec<_>, _>>()?;
            let mut origins = s.origins.clone();
            origins.push(derived_origin(&parts));
            NodeStats { schema, origins, card: s.card, cost: params.project * s.card, llm_calls: 0.0 }
        }
        Operator::SemanticProject { udf, outputs } => {
            let s = input(0)?;
            let parts = udf_origins(udf, &s.schema, &s.origins)?;
            let calls = distinct_combinations(&parts, s.card);
            let mut origins = s.origins.clone();
            origins.extend(outputs.iter().map(|_| derived_origin(&parts)));
            NodeStats {
                schema,
                origins,
                card: s.card,
                cost: params.project * s.card + params.llm_call * calls,
                llm_calls: calls,
            }
        }
        Operator::Join { on } => {
            let (l, r) = (input(0)?, input(1)?);
            let mut card = l.card * r.card;
            for (a, b) in on {
                let oa = lookup(&l.schema, &l.origins, a).or_else(|_| lookup(&r.schema, &r.origins, a))?;
                let ob = lookup(&r.schema, &r.origins, b).or_else(|_| lookup(&l.schema, &l.origins, b))?;
                card /= oa.distinct.max(ob.distinct).max(1.0);
            }
            let origins = l.origins.iter().chain(&r.origins).copied().collect();
            NodeStats { schema, origins, card, cost: params.join * (l.card + r.card), llm_calls: 0.0 }
        }
        Operator::SemanticJoin { udf } => {
            let (l, r) = (input(0)?, input(1)?);
            let (mut lo, mut ro) = (Vec::new(), Vec::new());
            for c in &udf.inputs {
                match l.schema.resolve(c) {
                    Ok(i) => lo.push(l.origins[i]),
                    Err(_) => ro.push(lookup(&r.schema, &r.origins, c)?),
                }
            }
            let calls = distinct_combinations(&lo, l.card) * distinct_combinations(&ro, r.card);
            let origins = l.origins.iter().chain(&r.origins).copied().collect();
            NodeStats {
                schema,
                origins,
                card: l.card * r.card * params.semantic_join_selectivity,
                cost: params.join * l.card * r.card + params.llm_call * calls,
                llm_calls: calls,
            }
        }
        Operator::TopK { k, .. } => {
            let s = input(0)?;
            let card = k.map_or(s.card, |k| s.card.min(k as f64));
            same(s, card, params.topk * s.card, 0.0)
        }
        Operator::SemanticTopK { udf, k } => {
            let s = input(0)?;
            let d = distinct_combinations(&udf_origins(udf, &s.schema, &s.origins)?, s.card);
            let calls = (d * (d - 1.0) / 2.0).max(0.0);
            let card = k.map_or(s.card, |k| s.card.min(k as f64));
            same(s, card, params.topk * s.card + params.llm_call * calls, calls)
        }
        Operator::Aggregate { group_by, aggs } => {
            let s = input(0)?;
            let groups = group_origins(group_by, s)?;
            let card = group_count(&groups, s.card);
            let mut origins = groups;
            origins.extend(aggs.iter().map(|_| Origin { distinct: card.max(1.0), rows: card.max(1.0) }));
            NodeStats { schema, origins, card, cost: params.aggregate * s.card, llm_calls: 0.0 }
        }
        Operator::SemanticAggregate { group_by, .. } => {
            let s = input(0)?;
            let groups = group_origins(group_by, s)?;
            let card = group_count(&groups, s.card);
            let mut origins = groups;
            origins.push(Origin { distinct: card.max(1.0), rows: card.max(1.0) });
            NodeStats {
                schema,
                origins,
                card,
                cost: params.aggregate * s.card + params.llm_call * card,
                llm_calls: card,
            }
        }
    })
}

fn group_origins(group_by: &[ColumnRef], s: &NodeStats) -> Result<Vec<Origin>, SchemaError> {
    group_by.iter().map(|c| lookup(&s.schema, &s.origins, c)).collect()
}

fn group_count(groups: &[Origin], card: f64) -> f64 {
    if groups.is_empty() {
        1.0
    } else {
        distinct_combinations(groups, card)
    }
}

/// Estimates every node of a plan.
pub fn estimate_cost(plan: &QueryPlan, stats: &Statistics, params: &CostParams) -> Result<CostEstimate, CostError> {
    let all = estimate_all(plan, stats, params)?;
    let mut nodes = Vec::with_capacity(plan.len());
    let (mut total, mut relational, mut calls) = (0.0, 0.0, 0.0);
    for id in plan.postorder() {
        let s = &all[id.0];
        total += s.cost;
        relational += s.cost - params.llm_call * s.llm_calls;
        calls += s.llm_calls;
        nodes.push(NodeCost { node: id, label: plan.op(id).label(), card: s.card, cost: s.cost, llm_calls: s.llm_calls });
    }
    Ok(CostEstimate { total, relational, llm_calls: calls, nodes })
}

pub(crate) fn estimate_all(plan: &QueryPlan, stats: &Statistics, params: &CostParams) -> Result<Vec<NodeStats>, CostError> {
    let mut out: Vec<Option<NodeStats>> = vec![None; plan.len()];
    for id in plan.postorder() {
        let inputs: Vec<&NodeStats> = plan.children(id).iter().map(|c| out[c.0].as_ref().expect("postorder")).collect();
        let s = estimate_node(plan.op(id), &inputs, stats, params).map_err(|source| CostError { node: id, source })?;
        out[id.0] = Some(s);
    }
    Ok(out.into_iter().map(|s| s.expect("all nodes")).collect())
}

/// Root estimate and total cost of a tree.
pub(crate) fn estimate_tree(tree: &PlanTree, stats: &Statistics, params: &CostParams) -> Result<(NodeStats, f64), CostError> {
    let plan = tree.clone().into_plan();
    let all = estimate_all(&plan, stats, params)?;
    let total = all.iter().map(|s| s.cost).sum();
    Ok((all[plan.root().0].clone(), total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yao_is_monotone_and_bounded() {
        let d = 20.0;
        let mut prev = 0.0;
        for card in 1..=100 {
            let y = yao(d, card as f64, 100.0);
            assert!(y >= prev - 1e-12);
            assert!(y <= d + 1e-12 && y <= card as f64 + 1e-12);
            prev = y;
        }
        assert_eq!(yao(d, 100.0, 100.0), d);
        assert!(yao(d, 42.0, 73.0) < d);
    }

    #[test]
    fn selectivity_rules() {
        let schema = Schema::new(vec![crate::relation::Column::new("a", crate::value::TypeTag::Int)]).unwrap();
        let o = [Origin { distinct: 4.0, rows: 10.0 }];
        let p = |s: &str| crate::parser::parse_expr(s).unwrap();
        assert!((selectivity(&p("a = 1"), &schema, &o) - 0.25).abs() < 1e-12);
        assert!((selectivity(&p("a != 1"), &schema, &o) - 0.75).abs() < 1e-12);
        assert!((selectivity(&p("a > 1"), &schema, &o) - 1.0 / 3.0).abs() < 1e-12);
        assert!((selectivity(&p("a IN (1, 2)"), &schema, &o) - 0.5).abs() < 1e-12);
        assert!((selectivity(&p("a = 1 OR a = 2"), &schema, &o) - (0.5 - 0.0625)).abs() < 1e-12);
        assert!((selectivity(&p("a = 1 AND a > 2"), &schema, &o) - 0.25 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tolerance_comparisons() {
        assert!(cost_eq(100.0, 100.0 + 1e-8));
        assert!(cost_lt(100.0, 100.1));
        assert!(!cost_lt(100.1, 100.0));
    }
}
