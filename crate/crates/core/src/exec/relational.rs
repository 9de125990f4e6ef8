//! Relational operators over in-memory relations.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::expr::{Expr, ExprError};
use crate::plan::{AggFunc, AggItem, OrderKey};
use crate::relation::{ColumnRef, Relation, ResolveError, Row, Schema};
use crate::value::{TypeTag, Value};

fn indices(schema: &Schema, cols: &[ColumnRef]) -> Result<Vec<usize>, ResolveError> {
    cols.iter().map(|c| schema.resolve(c)).collect()
}

pub(crate) fn conform(v: Value, ty: TypeTag) -> Value {
    match (v, ty) {
        (Value::Int(i), TypeTag::Float) => Value::Float(i as f64),
        (v, _) => v,
    }
}

pub fn select(rel: &Relation, predicate: &Expr) -> Result<Relation, ExprError> {
    let mut rows = Vec::new();
    for row in &rel.rows {
        if predicate.eval(row, &rel.schema)? == Value::Bool(true) {
            rows.push(row.clone());
        }
    }
    Ok(Relation { name: rel.name.clone(), schema: rel.schema.clone(), rows })
}

pub fn project(rel: &Relation, columns: &[ColumnRef], out: Schema) -> Result<Relation, ExprError> {
    let idx = indices(&rel.schema, columns)?;
    let rows = rel.rows.iter().map(|r| idx.iter().map(|i| r[*i].clone()).collect()).collect();
    Ok(Relation { name: rel.name.clone(), schema: out, rows })
}

pub fn derive(rel: &Relation, expr: &Expr, out: Schema) -> Result<Relation, ExprError> {
    let ty = out.column(out.len() - 1).ty;
    let mut rows = Vec::with_capacity(rel.rows.len());
    for row in &rel.rows {
        let v = conform(expr.eval(row, &rel.schema)?, ty);
        let mut r = row.clone();
        r.push(v);
        rows.push(r);
    }
    Ok(Relation { name: rel.name.clone(), schema: out, rows })
}

/// Hash equi-join; an empty key list is a cross product. Null keys never
/// match. Output follows left row order, then right row order.
pub fn join(l: &Relation, r: &Relation, on: &[(ColumnRef, ColumnRef)], out: Schema) -> Result<Relation, ExprError> {
    let mut li = Vec::new();
    let mut ri = Vec::new();
    for (a, b) in on {
        match (l.schema.resolve(a), r.schema.resolve(b)) {
            (Ok(x), Ok(y)) => {
                li.push(x);
                ri.push(y);
            }
            _ => {
                li.push(l.schema.resolve(b)?);
                ri.push(r.schema.resolve(a)?);
            }
        }
    }
    let mut index: HashMap<Vec<&Value>, Vec<usize>> = HashMap::new();
    for (n, row) in r.rows.iter().enumerate() {
        let key: Vec<&Value> = ri.iter().map(|i| &row[*i]).collect();
        if key.iter().any(|v| v.is_null()) {
            continue;
        }
        index.entry(key).or_default().push(n);
    }
    let mut rows = Vec::new();
    for lrow in &l.rows {
        let key: Vec<&Value> = li.iter().map(|i| &lrow[*i]).collect();
        if key.iter().any(|v| v.is_null()) {
            continue;
        }
        if let Some(matches) = index.get(&key) {
            for m in matches {
                let mut row = lrow.clone();
                row.extend(r.rows[*m].iter().cloned());
                rows.push(row);
            }
        }
    }
    Ok(Relation { name: format!("{}_{}", l.name, r.name), schema: out, rows })
}

/// Stable sort on the keys with nulls last in either direction, then the
/// first `k` rows.
pub fn topk(rel: &Relation, order: &[OrderKey], k: Option<usize>) -> Result<Relation, ExprError> {
    let keys: Vec<(usize, bool)> = order
        .iter()
        .map(|o| rel.schema.resolve(&o.column).map(|i| (i, o.descending)))
        .collect::<Result<_, _>>()?;
    let mut rows = rel.rows.clone();
    rows.sort_by(|a, b| {
        for (i, desc) in &keys {
            let o = match (a[*i].is_null(), b[*i].is_null()) {
                (true, true) => Ordering::Equal,
                (true, false) => Ordering::Greater,
                (false, true) => Ordering::Less,
                _ if *desc => b[*i].sort_cmp(&a[*i]),
                _ => a[*i].sort_cmp(&b[*i]),
            };
            if o.is_ne() {
                return o;
            }
        }
        Ordering::Equal
    });
    if let Some(k) = k {
        rows.truncate(k);
    }
    Ok(Relation { name: rel.name.clone(), schema: rel.schema.clone(), rows })
}

/// Groups by `group_by` in first-appearance order. Without grouping
/// columns there is exactly one output row, even for empty input.
pub fn group_rows(rel: &Relation, group_by: &[ColumnRef]) -> Result<Vec<(Row, Vec<usize>)>, ResolveError> {
    let gi = indices(&rel.schema, group_by)?;
    let mut order: Vec<(Row, Vec<usize>)> = Vec::new();
    let mut seen: HashMap<Row, usize> = HashMap::new();
    for (n, row) in rel.rows.iter().enumerate() {
        let key: Row = gi.iter().map(|i| row[*i].clone()).collect();
        match seen.get(&key) {
            Some(g) => order[*g].1.push(n),
            None => {
                seen.insert(key.clone(), order.len());
                order.push((key, vec![n]));
            }
        }
    }
    Ok(order)
}

pub fn aggregate(rel: &Relation, group_by: &[ColumnRef], aggs: &[AggItem], out: Schema) -> Result<Relation, ExprError> {
    let mut groups = group_rows(rel, group_by)?;
    if groups.is_empty() && group_by.is_empty() {
        groups.push((Vec::new(), Vec::new()));
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let mut row = key;
        for a in aggs {
            row.push(apply(rel, a, &members)?);
        }
        rows.push(row);
    }
    Ok(Relation { name: rel.name.clone(), schema: out, rows })
}

fn apply(rel: &Relation, a: &AggItem, members: &[usize]) -> Result<Value, ExprError> {
    let Some(col) = &a.arg else {
        return Ok(Value::Int(members.len() as i64));
    };
    let i = rel.schema.resolve(col)?;
    let vals: Vec<&Value> = members.iter().map(|m| &rel.rows[*m][i]).filter(|v| !v.is_null()).collect();
    Ok(match a.func {
        AggFunc::Count => Value::Int(vals.len() as i64),
        _ if vals.is_empty() => Value::Null,
        AggFunc::Sum => match rel.schema.column(i).ty {
            TypeTag::Int => {
                let mut acc: i64 = 0;
                for v in &vals {
                    if let Value::Int(x) = v {
                        acc = acc.checked_add(*x).ok_or(ExprError::Overflow("sum"))?;
                    }
                }
                Value::Int(acc)
            }
            _ => Value::Float(vals.iter().filter_map(|v| v.as_f64()).sum()),
        },
        AggFunc::Avg => {
            let xs: Vec<f64> = vals.iter().filter_map(|v| v.as_f64()).collect();
            Value::Float(xs.iter().sum::<f64>() / xs.len() as f64)
        }
        AggFunc::Min => (*vals.iter().min_by(|a, b| a.sort_cmp(b)).expect("non-empty")).clone(),
        AggFunc::Max => (*vals.iter().max_by(|a, b| a.sort_cmp(b)).expect("non-empty")).clone(),
    })
}
