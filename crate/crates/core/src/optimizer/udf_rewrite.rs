//! Asking the model whether a UDF can be replaced by a relational expression.

use serde::Deserialize;

use crate::backend::{complete_with_retry, DecodeParams, LlmBackend, RetryPolicy};
use crate::expr::Expr;
use crate::parser::parse_expr;
use crate::plan::{node_schemas, Operator, QueryPlan, SchemaProvider};
use crate::relation::Schema;
use crate::text::extract_json;
use crate::udf::{LlmUdf, OutputKind};
use crate::value::TypeTag;

#[derive(Debug, Clone, PartialEq)]
pub struct UdfRewrite {
    pub udf: String,
    pub expression: String,
}

#[derive(Debug, Clone)]
pub struct UdfRewriteOutcome {
    pub plan: QueryPlan,
    pub rewrites: Vec<UdfRewrite>,
    pub notes: Vec<String>,
}

#[derive(Deserialize)]
struct Answer {
    rewritable: bool,
    #[serde(default)]
    expression: Option<String>,
}

pub fn rewrite_prompt(udf: &LlmUdf, schema: &Schema, want: &str) -> String {
    let cols: Vec<String> = udf
        .inputs
        .iter()
        .filter_map(|c| schema.resolve(c).ok().map(|i| schema.column(i)))
        .map(|c| format!("{} ({})", crate::expr::column_text(&c.reference()), c.ty))
        .collect();
    format!(
        "You decide whether a natural-language function over table columns can be computed exactly \
         by a relational expression, without world knowledge.\n\n\
         Function: {}\nColumns: {}\nThe expression must produce a {want}.\n\n\
         Allowed: column names, literals, = != < <= > >=, AND OR NOT, + - * /, IN (...), BETWEEN, IS NULL, \
         and the functions strftime, lower, upper, length, trim, substr, abs, round.\n\n\
         Answer with JSON only: {{\"rewritable\": true, \"expression\": \"...\"}} or {{\"rewritable\": false}}.",
        udf.expression,
        cols.join(", "),
    )
}

/// Replaces semantic selections and scalar projections whose UDF the model
/// says is expressible relationally. Rejected or unparsable answers leave
/// the operator alone.
pub fn rewrite_udfs(
    plan: &QueryPlan,
    catalog: &dyn SchemaProvider,
    backend: &dyn LlmBackend,
    policy: RetryPolicy,
) -> UdfRewriteOutcome {
    let mut notes = Vec::new();
    let mut rewrites = Vec::new();
    let schemas = match node_schemas(plan, catalog) {
        Ok(s) => s,
        Err((id, e)) => {
            notes.push(format!("UDF rewriting skipped: node {id}: {e}"));
            return UdfRewriteOutcome { plan: plan.clone(), rewrites, notes };
        }
    };
    let mut tree_ops: Vec<Operator> = plan.nodes().iter().map(|n| n.op.clone()).collect();
    for id in plan.postorder() {
        let input = match plan.children(id).first() {
            Some(c) => &schemas[c.0],
            None => continue,
        };
        let (udf, want) = match plan.op(id) {
            Operator::SemanticSelect { udf } => (udf, Some(TypeTag::Bool)),
            Operator::SemanticProject { udf, outputs } if outputs.len() == 1 => match udf.output {
                OutputKind::Scalar(t) => (udf, Some(t)),
                _ => continue,
            },
            _ => continue,
        };
        let want = want.expect("set above");
        let prompt = rewrite_prompt(udf, input, if want == TypeTag::Bool { "boolean" } else { want.keyword() });
        let validate = |text: &str| -> Result<Option<Expr>, String> {
            let json = extract_json(text).ok_or("no JSON object found")?;
            let a: Answer = serde_json::from_str(json).map_err(|e| format!("invalid JSON: {e}"))?;
            if !a.rewritable {
                return Ok(None);
            }
            let src = a.expression.ok_or("`expression` is missing")?;
            let e = parse_expr(&src).map_err(|e| format!("expression does not parse: {e}"))?;
            for c in e.columns() {
                if !udf.inputs.iter().any(|i| i.name == c.name) {
                    return Err(format!("expression reads `{c}`, which is not an input of the function"));
                }
            }
            let ty = e.infer_type(input).map_err(|e| e.to_string())?;
            match ty {
                Some(t) if t == want || (want.is_numeric() && t.is_numeric()) => Ok(Some(e)),
                None => Ok(Some(e)),
                Some(t) => Err(format!("expression has type {t}, expected {want}")),
            }
        };
        match complete_with_retry(backend, &prompt, &DecodeParams::for_model(&udf.model), policy, validate) {
            Ok(Some(expr)) => {
                rewrites.push(UdfRewrite { udf: udf.name.clone(), expression: expr.to_string() });
                tree_ops[id.0] = match plan.op(id) {
                    Operator::SemanticSelect { .. } => Operator::Select { predicate: expr },
                    Operator::SemanticProject { outputs, .. } => Operator::Derive { expr, alias: outputs[0].clone() },
                    _ => unreachable!(),
                };
            }
            Ok(None) => {}
            Err(e) => notes.push(format!("UDF `{}` kept: {e}", udf.name)),
        }
    }
    let nodes = plan
        .nodes()
        .iter()
        .zip(tree_ops)
        .map(|(n, op)| crate::plan::PlanNode { id: n.id, op, children: n.children.clone() })
        .collect();
    UdfRewriteOutcome { plan: QueryPlan::from_raw_parts(nodes, plan.root()), rewrites, notes }
}
