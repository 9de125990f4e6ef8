//! Static checks over a plan against a catalog.

use std::fmt;

use crate::relation::{ColumnRef, ResolveError, Schema};
use crate::udf::OutputKind;
use crate::value::TypeTag;

use super::schema::{schema_for, SchemaError, SchemaProvider};
use super::{NodeId, OpClass, Operator, QueryPlan};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Problem {
    #[error("{node}: unknown table `{table}`")]
    UnknownTable { node: NodeId, table: String },
    #[error("{node}: unknown column `{column}`")]
    UnknownColumn { node: NodeId, column: ColumnRef },
    #[error("{node}: ambiguous column `{column}`")]
    AmbiguousColumn { node: NodeId, column: ColumnRef },
    #[error("{node}: {operator} expects {expected} input(s), found {found}")]
    Arity { node: NodeId, operator: &'static str, expected: usize, found: usize },
    #[error("{node}: UDF `{udf}` returns {found}, which cannot be used in {operator}")]
    OutputKindMismatch { node: NodeId, udf: String, operator: &'static str, found: OutputKind },
    #[error("{node}: UDF `{udf}` references `{{{placeholder}}}` which is not one of its inputs")]
    UnboundPlaceholder { node: NodeId, udf: String, placeholder: String },
    #[error("{node}: {message}")]
    Type { node: NodeId, message: String },
    #[error("{node}: duplicate column `{column}`")]
    DuplicateColumn { node: NodeId, column: ColumnRef },
    #[error("malformed plan: {0}")]
    Structure(String),
}

/// Every problem found in a plan; empty means the plan is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub problems: Vec<Problem>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.problems.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.problems.is_empty() {
            return f.write_str("plan is valid");
        }
        for (i, p) in self.problems.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

fn allowed(class: OpClass, kind: &OutputKind) -> bool {
    match class {
        OpClass::Select | OpClass::Join | OpClass::TopK => matches!(kind, OutputKind::Boolean),
        OpClass::Project => matches!(kind, OutputKind::Scalar(_) | OutputKind::Tuple(_)),
        OpClass::Aggregate => matches!(kind, OutputKind::Aggregate(_)),
        OpClass::Scan => false,
    }
}

fn resolve_problem(node: NodeId, e: &ResolveError) -> Problem {
    match e {
        ResolveError::Unknown(c) => Problem::UnknownColumn { node, column: c.clone() },
        ResolveError::Ambiguous(c) => Problem::AmbiguousColumn { node, column: c.clone() },
    }
}

fn schema_problem(node: NodeId, e: SchemaError) -> Problem {
    match e {
        SchemaError::UnknownTable(table) => Problem::UnknownTable { node, table },
        SchemaError::Resolve(r) => resolve_problem(node, &r),
        SchemaError::Duplicate(d) => Problem::DuplicateColumn { node, column: d.0 },
        SchemaError::Expr(crate::expr::ExprError::Resolve(r)) => resolve_problem(node, &r),
        SchemaError::Expr(e) => Problem::Type { node, message: e.to_string() },
        SchemaError::Invalid(message) => Problem::Type { node, message },
    }
}

fn op_name(op: &Operator) -> &'static str {
    match op {
        Operator::Scan { .. } => "Scan",
        Operator::Select { .. } => "Select",
        Operator::SemanticSelect { .. } => "semantic Select",
        Operator::Project { .. } | Operator::Derive { .. } => "Project",
        Operator::SemanticProject { .. } => "semantic Project",
        Operator::Join { .. } => "Join",
        Operator::SemanticJoin { .. } => "semantic Join",
        Operator::TopK { .. } => "TopK",
        Operator::SemanticTopK { .. } => "semantic TopK",
        Operator::Aggregate { .. } => "Aggregate",
        Operator::SemanticAggregate { .. } => "semantic Aggregate",
    }
}

/// Checks tree shape, table and column references, UDF output kinds and
/// expression types. All problems are reported, not just the first.
pub fn validate_plan(plan: &QueryPlan, catalog: &dyn SchemaProvider) -> ValidationReport {
    let mut problems = Vec::new();
    let n = plan.len();
    if n == 0 || plan.root().0 >= n {
        problems.push(Problem::Structure("root is not a node of the plan".into()));
        return ValidationReport { problems };
    }
    let mut parent_count = vec![0usize; n];
    for node in plan.nodes() {
        for c in &node.children {
            if c.0 >= n {
                problems.push(Problem::Structure(format!("{} has child {} which does not exist", node.id, c)));
            } else {
                parent_count[c.0] += 1;
            }
        }
    }
    for (i, count) in parent_count.iter().enumerate() {
        if *count > 1 {
            problems.push(Problem::Structure(format!("#{i} has {count} parents")));
        }
    }
    if parent_count[plan.root().0] > 0 {
        problems.push(Problem::Structure(format!("root {} has a parent", plan.root())));
    }
    let order = plan.postorder();
    if order.len() != n {
        problems.push(Problem::Structure(format!(
            "{} node(s) are unreachable from the root or part of a cycle",
            n - order.len().min(n)
        )));
    }
    if !problems.is_empty() {
        return ValidationReport { problems };
    }

    let mut schemas: Vec<Option<Schema>> = vec![None; n];
    for id in order {
        let node = plan.node(id);
        let op = &node.op;
        if node.children.len() != op.arity() {
            problems.push(Problem::Arity { node: id, operator: op_name(op), expected: op.arity(), found: node.children.len() });
            continue;
        }
        let inputs: Option<Vec<&Schema>> = node.children.iter().map(|c| schemas[c.0].as_ref()).collect();
        let Some(inputs) = inputs else {
            // A child already failed; its problem is reported.
            continue;
        };
        let before = problems.len();
        check_node(id, op, &inputs, &mut problems);
        if problems.len() > before {
            continue;
        }
        match schema_for(op, &inputs, catalog) {
            Ok(s) => schemas[id.0] = Some(s),
            Err(e) => problems.push(schema_problem(id, e)),
        }
    }
    ValidationReport { problems }
}

fn check_node(id: NodeId, op: &Operator, inputs: &[&Schema], problems: &mut Vec<Problem>) {
    let combined;
    let scope: &Schema = match op {
        Operator::Scan { .. } => return,
        Operator::Join { .. } | Operator::SemanticJoin { .. } => {
            combined = inputs[0].concat(inputs[1]).unwrap_or_else(|_| inputs[0].clone());
            &combined
        }
        _ => inputs[0],
    };

    if let Some(udf) = op.udf() {
        if !allowed(op.class(), &udf.output) {
            problems.push(Problem::OutputKindMismatch {
                node: id,
                udf: udf.name.clone(),
                operator: op_name(op),
                found: udf.output.clone(),
            });
        }
        for c in &udf.inputs {
            if let Err(e) = scope.resolve(c) {
                problems.push(resolve_problem(id, &e));
            }
        }
        for p in udf.unbound_placeholders() {
            problems.push(Problem::UnboundPlaceholder { node: id, udf: udf.name.clone(), placeholder: p });
        }
    }

    match op {
        Operator::Select { predicate } => match predicate.infer_type(scope) {
            Ok(Some(TypeTag::Bool)) | Ok(None) => {}
            Ok(Some(t)) => problems.push(Problem::Type { node: id, message: format!("predicate has type {t}, expected bool") }),
            Err(crate::expr::ExprError::Resolve(e)) => problems.push(resolve_problem(id, &e)),
            Err(e) => problems.push(Problem::Type { node: id, message: e.to_string() }),
        },
        Operator::Join { on } => {
            for (l, r) in on {
                let lt = inputs[0].resolve(l).map(|i| inputs[0].column(i).ty);
                let rt = inputs[1].resolve(r).map(|i| inputs[1].column(i).ty);
                match (&lt, &rt) {
                    (Ok(a), Ok(b)) if a != b => problems.push(Problem::Type {
                        node: id,
                        message: format!("join keys `{l}` ({a}) and `{r}` ({b}) have different types"),
                    }),
                    _ => {}
                }
                if let Err(e) = lt {
                    problems.push(resolve_problem(id, &e));
                }
                if let Err(e) = rt {
                    problems.push(resolve_problem(id, &e));
                }
            }
        }
        Operator::TopK { order, k } => {
            for o in order {
                if let Err(e) = scope.resolve(&o.column) {
                    problems.push(resolve_problem(id, &e));
                }
            }
            if order.is_empty() {
                problems.push(Problem::Type { node: id, message: "TopK needs at least one order key".into() });
            }
            if *k == Some(0) {
                problems.push(Problem::Type { node: id, message: "k must be at least 1".into() });
            }
        }
        Operator::SemanticTopK { k: Some(0), .. } => {
            problems.push(Problem::Type { node: id, message: "k must be at least 1".into() });
        }
        _ => {}
    }
}
