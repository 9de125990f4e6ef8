//! Output schemas of plan nodes.

use std::collections::BTreeMap;

use crate::expr::ExprError;
use crate::relation::{Column, ColumnRef, Database, DuplicateColumn, ResolveError, Schema};
use crate::udf::{LlmUdf, OutputKind};
use crate::value::TypeTag;

use super::{AggFunc, NodeId, Operator, QueryPlan};

/// Source of base-table schemas.
pub trait SchemaProvider {
    /// Unqualified columns of `table`; scans qualify them with the table name.
    fn table_schema(&self, table: &str) -> Option<Schema>;
}

impl SchemaProvider for Database {
    fn table_schema(&self, table: &str) -> Option<Schema> {
        self.get(table).map(|r| r.schema.clone())
    }
}

impl SchemaProvider for BTreeMap<String, Schema> {
    fn table_schema(&self, table: &str) -> Option<Schema> {
        self.get(table).cloned()
    }
}

impl<T: SchemaProvider + ?Sized> SchemaProvider for &T {
    fn table_schema(&self, table: &str) -> Option<Schema> {
        (**self).table_schema(table)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemaError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Duplicate(#[from] DuplicateColumn),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{0}")]
    Invalid(String),
}

/// Schema of one node given its children's schemas.
pub fn schema_for(
    op: &Operator,
    inputs: &[&Schema],
    catalog: &dyn SchemaProvider,
) -> Result<Schema, SchemaError> {
    let input = |i: usize| -> Result<&Schema, SchemaError> {
        inputs.get(i).copied().ok_or_else(|| SchemaError::Invalid("missing input".into()))
    };
    match op {
        Operator::Scan { table } => {
            let base = catalog.table_schema(table).ok_or_else(|| SchemaError::UnknownTable(table.clone()))?;
            let cols = base
                .columns()
                .iter()
                .map(|c| {
                    let mut c = c.clone();
                    c.qualifier = Some(table.clone());
                    c
                })
                .collect();
            Ok(Schema::new(cols)?)
        }
        Operator::Select { .. } | Operator::SemanticSelect { .. } => Ok(input(0)?.clone()),
        Operator::TopK { .. } | Operator::SemanticTopK { .. } => Ok(input(0)?.clone()),
        Operator::Project { columns } => {
            let s = input(0)?;
            let mut out = Schema::default();
            for c in columns {
                out.push(s.column(s.resolve(c)?).clone())?;
            }
            Ok(out)
        }
        Operator::Derive { expr, alias } => {
            let s = input(0)?;
            let ty = expr.infer_type(s)?.unwrap_or(TypeTag::Text);
            append(s, &[(alias.clone(), ty)])
        }
        Operator::SemanticProject { udf, outputs } => {
            let s = input(0)?;
            let fields = projection_fields(udf, outputs)?;
            append(s, &fields)
        }
        Operator::Join { .. } | Operator::SemanticJoin { .. } => Ok(input(0)?.concat(input(1)?)?),
        Operator::Aggregate { group_by, aggs } => {
            let s = input(0)?;
            let mut out = group_schema(s, group_by)?;
            for a in aggs {
                let ty = match (a.func, &a.arg) {
                    (AggFunc::Count, _) => TypeTag::Int,
                    (_, None) => return Err(SchemaError::Invalid(format!("{}(*) is not allowed", a.func.name()))),
                    (f, Some(c)) => {
                        let t = s.column(s.resolve(c)?).ty;
                        match f {
                            AggFunc::Sum if t.is_numeric() => t,
                            AggFunc::Avg if t.is_numeric() => TypeTag::Float,
                            AggFunc::Min | AggFunc::Max => t,
                            _ => {
                                return Err(SchemaError::Invalid(format!(
                                    "{}({c}) needs a numeric column, found {t}",
                                    f.name()
                                )))
                            }
                        }
                    }
                };
                push_derived(&mut out, &a.alias, ty)?;
            }
            Ok(out)
        }
        Operator::SemanticAggregate { group_by, udf, alias } => {
            let s = input(0)?;
            let mut out = group_schema(s, group_by)?;
            let ty = match &udf.output {
                OutputKind::Aggregate(t) => *t,
                _ => TypeTag::Text,
            };
            push_derived(&mut out, alias, ty)?;
            Ok(out)
        }
    }
}

/// Output columns of a semantic projection: one per output name.
pub(crate) fn projection_fields(udf: &LlmUdf, outputs: &[String]) -> Result<Vec<(String, TypeTag)>, SchemaError> {
    match &udf.output {
        OutputKind::Scalar(t) => match outputs {
            [one] => Ok(vec![(one.clone(), *t)]),
            _ => Err(SchemaError::Invalid(format!(
                "scalar UDF `{}` must produce exactly one column, got {}",
                udf.name,
                outputs.len()
            ))),
        },
        OutputKind::Tuple(fields) => {
            let names: Vec<&String> = fields.iter().map(|(n, _)| n).collect();
            if names.len() != outputs.len() || names.iter().zip(outputs).any(|(a, b)| *a != b) {
                return Err(SchemaError::Invalid(format!(
                    "tuple UDF `{}` declares fields ({}) but the projection names ({})",
                    udf.name,
                    names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
                    outputs.join(", ")
                )));
            }
            Ok(fields.clone())
        }
        // Reported separately as an output-kind mismatch.
        _ => Ok(outputs.iter().map(|o| (o.clone(), TypeTag::Text)).collect()),
    }
}

fn group_schema(s: &Schema, group_by: &[ColumnRef]) -> Result<Schema, SchemaError> {
    let mut out = Schema::default();
    for c in group_by {
        out.push(s.column(s.resolve(c)?).clone())?;
    }
    Ok(out)
}

fn append(s: &Schema, fields: &[(String, TypeTag)]) -> Result<Schema, SchemaError> {
    let mut out = s.clone();
    for (name, ty) in fields {
        push_derived(&mut out, name, *ty)?;
    }
    Ok(out)
}

/// Derived columns are unqualified and must not shadow any existing name.
fn push_derived(s: &mut Schema, name: &str, ty: TypeTag) -> Result<(), SchemaError> {
    if s.columns().iter().any(|c| c.name == name) {
        return Err(DuplicateColumn(ColumnRef::bare(name)).into());
    }
    s.push(Column::new(name, ty))?;
    Ok(())
}

/// Schemas of every node, indexed by node id. Fails on the first problem.
pub fn node_schemas(plan: &QueryPlan, catalog: &dyn SchemaProvider) -> Result<Vec<Schema>, (NodeId, SchemaError)> {
    let mut out: Vec<Option<Schema>> = vec![None; plan.len()];
    for id in plan.postorder() {
        let node = plan.node(id);
        let inputs: Vec<&Schema> = node.children.iter().filter_map(|c| out[c.0].as_ref()).collect();
        let s = schema_for(&node.op, &inputs, catalog).map_err(|e| (id, e))?;
        out[id.0] = Some(s);
    }
    Ok(out.into_iter().map(|s| s.unwrap_or_default()).collect())
}

pub fn output_schema(plan: &QueryPlan, catalog: &dyn SchemaProvider) -> Result<Schema, (NodeId, SchemaError)> {
    let mut all = node_schemas(plan, catalog)?;
    Ok(all.swap_remove(plan.root().0))
}
