//! Plan execution against an in-memory database and an LLM backend.
//!
//! Relational operators run locally. Semantic operators call the backend,
//! one call per distinct input tuple, fanned out over a bounded worker pool.
//! Results do not depend on the degree of parallelism.

mod dispatch;
mod join;
pub mod parse_output;
pub mod relational;
mod semantic;
pub mod templates;


use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{DecodeParams, LlmBackend, Metered, RetryError, RetryPolicy};
use crate::expr::ExprError;
use crate::plan::{schema_for, NodeId, Operator, QueryPlan, SchemaError};
use crate::relation::{Database, Relation, ResolveError};

pub use join::{clamp_batch, BatchPlan};
pub use templates::Templates;

use dispatch::{Dispatcher, TimedOut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JoinStrategy {
    /// One yes/no call per distinct key pair.
    Nested,
    /// A sizing call, then one call per batch pair.
    Smart,
    /// Nested for small key products, smart otherwise.
    #[default]
    Auto,
}

impl fmt::Display for JoinStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JoinStrategy::Nested => "nested",
            JoinStrategy::Smart => "smart",
            JoinStrategy::Auto => "auto",
        })
    }
}

impl FromStr for JoinStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nested" => Ok(JoinStrategy::Nested),
            "smart" => Ok(JoinStrategy::Smart),
            "auto" => Ok(JoinStrategy::Auto),
            other => Err(format!("unknown join strategy `{other}` (expected nested, smart or auto)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    /// Concurrent backend calls within one operator.
    pub parallelism: usize,
    pub join_strategy: JoinStrategy,
    /// Under `Auto`, key products up to this size use nested loops.
    pub auto_nested_limit: usize,
    /// Upper bound on either batch size of a smart join.
    pub max_batch: usize,
    pub retry: RetryPolicy,
    /// Token budget of one aggregate prompt.
    pub aggregate_budget_tokens: usize,
    pub timeout: Option<Duration>,
    /// Answer every semantic operator with a fixed stand-in instead of
    /// calling the backend: selects keep all rows, projections and
    /// aggregates yield NULL, joins are cross products and top-k keeps input
    /// order.
    pub stub_llm: bool,
    pub templates: Templates,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            parallelism: 10,
            join_strategy: JoinStrategy::Auto,
            auto_nested_limit: 16,
            max_batch: 50,
            retry: RetryPolicy::default(),
            aggregate_budget_tokens: 3000,
            timeout: Some(Duration::from_secs(3600)),
            stub_llm: false,
            templates: Templates::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorReport {
    pub node: NodeId,
    pub label: String,
    pub rows_in: usize,
    pub rows_out: usize,
    /// Backend calls, retries included.
    pub llm_calls: u64,
    /// Distinct prompts issued (calls minus retries).
    pub prompts: u64,
    pub retries: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub elapsed_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchPlan>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecutionReport {
    #[serde(skip)]
    pub result: Relation,
    pub llm_calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Token counts include local estimates.
    pub tokens_estimated: bool,
    pub retries: u64,
    pub elapsed_ms: f64,
    /// In execution order.
    pub operators: Vec<OperatorReport>,
}

impl ExecutionReport {
    pub fn operator(&self, node: NodeId) -> Option<&OperatorReport> {
        self.operators.iter().find(|o| o.node == node)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("node {} ({label}): {source}", node.0)]
    Schema { node: NodeId, label: String, source: SchemaError },
    #[error("node {} ({label}): {source}", node.0)]
    Eval { node: NodeId, label: String, source: ExprError },
    #[error("LLM call failed in node {} ({label}): {source}", node.0)]
    Llm { node: NodeId, label: String, source: RetryError },
    #[error("execution exceeded the timeout of {0:?}")]
    Timeout(Duration),
}

/// Failure inside one operator, before the node is attached.
#[derive(Debug)]
pub(crate) enum OpError {
    Llm(RetryError),
    Timeout,
    Eval(ExprError),
}

impl From<RetryError> for OpError {
    fn from(e: RetryError) -> Self {
        OpError::Llm(e)
    }
}

impl From<ExprError> for OpError {
    fn from(e: ExprError) -> Self {
        OpError::Eval(e)
    }
}

impl From<ResolveError> for OpError {
    fn from(e: ResolveError) -> Self {
        OpError::Eval(e.into())
    }
}

impl From<TimedOut> for OpError {
    fn from(_: TimedOut) -> Self {
        OpError::Timeout
    }
}

#[derive(Debug, Default)]
pub(crate) struct OpInfo {
    pub prompts: usize,
    pub detail: Option<String>,
    pub batch: Option<BatchPlan>,
}

pub(crate) struct Ctx<'a> {
    pub backend: &'a dyn LlmBackend,
    pub config: &'a ExecConfig,
    pub deadline: Option<Instant>,
}

impl Ctx<'_> {
    fn dispatcher(&self) -> Dispatcher<'_> {
        Dispatcher {
            backend: self.backend,
            parallelism: self.config.parallelism,
            policy: self.config.retry,
            deadline: self.deadline,
        }
    }

    pub fn run<T: Send>(
        &self,
        prompts: &[String],
        params: &DecodeParams,
        validate: &(dyn Fn(&str) -> Result<T, String> + Sync),
    ) -> Result<Vec<Result<T, RetryError>>, OpError> {
        Ok(self.dispatcher().run(prompts, params, &|_, t| validate(t))?)
    }

    pub fn run_indexed<T: Send>(
        &self,
        prompts: &[String],
        params: &DecodeParams,
        validate: &(dyn Fn(usize, &str) -> Result<T, String> + Sync),
    ) -> Result<Vec<Result<T, RetryError>>, OpError> {
        Ok(self.dispatcher().run(prompts, params, validate)?)
    }
}

/// Runs `plan` bottom-up and reports per-operator calls, tokens and timing.
pub fn execute(
    plan: &QueryPlan,
    db: &Database,
    backend: &dyn LlmBackend,
    config: &ExecConfig,
) -> Result<ExecutionReport, ExecError> {
    let started = Instant::now();
    let metered = Metered::new(backend);
    let ctx = Ctx { backend: &metered, config, deadline: config.timeout.map(|t| started + t) };
    let timeout = config.timeout.unwrap_or_default();
    let mut results: Vec<Option<Relation>> = vec![None; plan.len()];
    let mut operators = Vec::with_capacity(plan.len());
    for id in plan.postorder() {
        if ctx.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(ExecError::Timeout(timeout));
        }
        let node = plan.node(id);
        let label = node.op.label();
        let inputs: Vec<Relation> = node
            .children
            .iter()
            .map(|c| results[c.0].take().expect("children run first"))
            .collect();
        let schemas: Vec<_> = inputs.iter().map(|r| &r.schema).collect();
        let out = schema_for(&node.op, &schemas, db).map_err(|source| match source {
            SchemaError::UnknownTable(t) => ExecError::UnknownTable(t),
            source => ExecError::Schema { node: id, label: label.clone(), source },
        })?;
        let before = metered.usage();
        let op_start = Instant::now();
        let (rel, info) = run_operator(&ctx, &node.op, &inputs, out, db).map_err(|e| match e {
            OpError::Llm(source) => ExecError::Llm { node: id, label: label.clone(), source },
            OpError::Eval(source) => ExecError::Eval { node: id, label: label.clone(), source },
            OpError::Timeout => ExecError::Timeout(timeout),
        })?;
        let usage = metered.usage().since(&before);
        let prompts = info.prompts as u64;
        operators.push(OperatorReport {
            node: id,
            label,
            rows_in: inputs.iter().map(|r| r.rows.len()).sum(),
            rows_out: rel.rows.len(),
            llm_calls: usage.calls,
            prompts,
            retries: usage.calls.saturating_sub(prompts),
            tokens_in: usage.tokens_in,
            tokens_out: usage.tokens_out,
            elapsed_ms: op_start.elapsed().as_secs_f64() * 1000.0,
            detail: info.detail,
            batch: info.batch,
        });
        results[id.0] = Some(rel);
    }
    let usage = metered.usage();
    let result = results[plan.root().0].take().expect("root was executed");
    Ok(ExecutionReport {
        result,
        llm_calls: usage.calls,
        tokens_in: usage.tokens_in,
        tokens_out: usage.tokens_out,
        tokens_estimated: usage.estimated,
        retries: operators.iter().map(|o| o.retries).sum(),
        elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
        operators,
    })
}

fn run_operator(
    ctx: &Ctx,
    op: &Operator,
    inputs: &[Relation],
    out: crate::relation::Schema,
    db: &Database,
) -> Result<(Relation, OpInfo), OpError> {
    let plain = |r: Result<Relation, ExprError>| -> Result<(Relation, OpInfo), OpError> { Ok((r?, OpInfo::default())) };
    match op {
        Operator::Scan { table } => {
            let base = db.get(table).expect("schema_for checked the table");
            Ok((Relation { name: table.clone(), schema: out, rows: base.rows.clone() }, OpInfo::default()))
        }
        Operator::Select { predicate } => plain(relational::select(&inputs[0], predicate)),
        Operator::Project { columns } => plain(relational::project(&inputs[0], columns, out)),
        Operator::Derive { expr, .. } => plain(relational::derive(&inputs[0], expr, out)),
        Operator::Join { on } => plain(relational::join(&inputs[0], &inputs[1], on, out)),
        Operator::TopK { order, k } => plain(relational::topk(&inputs[0], order, *k)),
        Operator::Aggregate { group_by, aggs } => plain(relational::aggregate(&inputs[0], group_by, aggs, out)),
        Operator::SemanticSelect { udf } => semantic::semantic_select(ctx, &inputs[0], udf),
        Operator::SemanticProject { udf, .. } => semantic::semantic_project(ctx, &inputs[0], udf, out),
        Operator::SemanticJoin { udf } => join::semantic_join(ctx, &inputs[0], &inputs[1], udf, out),
        Operator::SemanticTopK { udf, k } => semantic::semantic_topk(ctx, &inputs[0], udf, *k),
        Operator::SemanticAggregate { group_by, udf, .. } => {
            semantic::semantic_aggregate(ctx, &inputs[0], group_by, udf, out)
        }
    }
}
