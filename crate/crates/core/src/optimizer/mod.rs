//! Cost-based optimization of hybrid plans.
//!
//! Relational rewrites run first, then movable LLM operators are placed by
//! [`place_llm_udfs`]. Every placement move is approved by an equivalence
//! oracle; anything it cannot prove equivalent stays where it was.

pub mod cost;
mod placement;
mod rewrite;
mod udf_rewrite;

use crate::equivalence::EquivalenceOracle;
use crate::plan::{validate_plan, QueryPlan};

pub use cost::{
    cost_eq, cost_lt, estimate_cost, estimate_node, selectivity, yao, CostError, CostEstimate, CostParams, NodeCost,
    NodeStats, Origin, Statistics, TableStats, COST_EPSILON,
};
pub use placement::{solve, Assignment, CheckRecord, Placement, PlacementProblem, SkeletonNode, MAX_MOVABLE};
pub use rewrite::{push_down_selections, reorder_joins};
pub use udf_rewrite::{rewrite_prompt, rewrite_udfs, UdfRewrite, UdfRewriteOutcome};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("plan is invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimizerOptions {
    pub relational: bool,
    pub placement: bool,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions { relational: true, placement: true }
    }
}

#[derive(Debug, Clone)]
pub struct PlacementOutcome {
    pub plan: QueryPlan,
    pub cost_before: f64,
    pub cost_after: f64,
    pub checks: Vec<CheckRecord>,
    pub notes: Vec<String>,
}

/// Moves semantic selections and projections to their cheapest approved
/// positions. Plans with no movable operator, or more than
/// [`MAX_MOVABLE`], come back unchanged.
pub fn place_llm_udfs(
    plan: &QueryPlan,
    stats: &Statistics,
    params: &CostParams,
    oracle: &dyn EquivalenceOracle,
) -> Result<PlacementOutcome, OptimizeError> {
    let before = estimate_cost(plan, stats, params)?.total;
    let unchanged = |checks, notes| PlacementOutcome {
        plan: plan.clone(),
        cost_before: before,
        cost_after: before,
        checks,
        notes,
    };
    let problem = PlacementProblem::new(plan, stats, oracle).map_err(|e| OptimizeError::Invalid(e.to_string()))?;
    if problem.movable.is_empty() {
        return Ok(unchanged(Vec::new(), Vec::new()));
    }
    if problem.movable.len() > MAX_MOVABLE {
        let note = format!(
            "{} movable LLM operators exceed the limit of {MAX_MOVABLE}; placement left unchanged",
            problem.movable.len()
        );
        return Ok(unchanged(Vec::new(), vec![note]));
    }
    let Some(best) = solve(&problem, stats, params) else {
        return Ok(unchanged(problem.checks, vec!["no valid placement found; plan left unchanged".into()]));
    };
    let report = validate_plan(&best.plan, stats);
    if !report.is_valid() {
        let note = format!("placement produced an invalid plan ({report}); plan left unchanged");
        return Ok(unchanged(problem.checks, vec![note]));
    }
    let after = estimate_cost(&best.plan, stats, params)?.total;
    if cost_lt(before, after) {
        return Ok(unchanged(problem.checks, vec!["placement did not lower the cost".into()]));
    }
    Ok(PlacementOutcome { plan: best.plan, cost_before: before, cost_after: after, checks: problem.checks, notes: Vec::new() })
}

/// Pushdown and join ordering, kept only when the estimated cost does not rise.
pub fn relational_rewrite(plan: &QueryPlan, stats: &Statistics, params: &CostParams) -> Result<QueryPlan, OptimizeError> {
    let before = estimate_cost(plan, stats, params)?.total;
    let pushed = push_down_selections(plan.to_tree(), stats);
    let ordered = reorder_joins(pushed, stats, params).into_plan();
    if !validate_plan(&ordered, stats).is_valid() {
        return Ok(plan.clone());
    }
    match estimate_cost(&ordered, stats, params) {
        Ok(c) if !cost_lt(before, c.total) => Ok(ordered),
        _ => Ok(plan.clone()),
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub original: QueryPlan,
    pub plan: QueryPlan,
    pub cost_before: CostEstimate,
    pub cost_after: CostEstimate,
    pub checks: Vec<CheckRecord>,
    /// Rewrite phases that changed the plan, in order.
    pub rules: Vec<String>,
    pub notes: Vec<String>,
}

pub fn optimize(
    plan: &QueryPlan,
    stats: &Statistics,
    params: &CostParams,
    oracle: &dyn EquivalenceOracle,
    options: OptimizerOptions,
) -> Result<OptimizeOutcome, OptimizeError> {
    let report = validate_plan(plan, stats);
    if !report.is_valid() {
        return Err(OptimizeError::Invalid(report.to_string()));
    }
    let cost_before = estimate_cost(plan, stats, params)?;
    let mut current = plan.clone();
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut rules = Vec::new();
    if options.relational {
        let next = relational_rewrite(&current, stats, params)?;
        if !next.structurally_eq(&current) {
            rules.push("relational rewrite (selection pushdown, join ordering)".to_string());
        }
        current = next;
    }
    if options.placement {
        let placed = place_llm_udfs(&current, stats, params, oracle)?;
        if !placed.plan.structurally_eq(&current) {
            rules.push("LLM UDF placement".to_string());
        }
        current = placed.plan;
        checks = placed.checks;
        notes = placed.notes;
    }
    let cost_after = estimate_cost(&current, stats, params)?;
    Ok(OptimizeOutcome { original: plan.clone(), plan: current, cost_before, cost_after, checks, rules, notes })
}

#[cfg(test)]
mod tests;
