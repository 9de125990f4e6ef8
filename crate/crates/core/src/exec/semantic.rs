//! Semantic select, project, top-k and aggregate.
//!
//! Every operator prompts once per distinct non-null input tuple. Rows whose
//! input has a null are not sent to the model.

use std::collections::HashMap;

use crate::backend::{estimate_tokens, DecodeParams};
use crate::relation::{ColumnRef, Relation, Row, Schema};
use crate::udf::{LlmUdf, OutputKind};
use crate::value::{TypeTag, Value};

use super::parse_output::{parse_bool, parse_choice, parse_tuple, parse_value};
use super::relational::{conform, group_rows};
use super::templates::render;
use super::{Ctx, OpError, OpInfo};

/// Distinct input tuples in first-appearance order and, per row, the index
/// of its tuple (`None` when any input value is null).
pub(crate) struct Keys {
    pub keys: Vec<Row>,
    pub row_key: Vec<Option<usize>>,
}

pub(crate) fn distinct_keys(rel: &Relation, idx: &[usize]) -> Keys {
    let mut keys: Vec<Row> = Vec::new();
    let mut seen: HashMap<Row, usize> = HashMap::new();
    let mut row_key = Vec::with_capacity(rel.rows.len());
    for row in &rel.rows {
        let key: Row = idx.iter().map(|i| row[*i].clone()).collect();
        if key.iter().any(Value::is_null) {
            row_key.push(None);
            continue;
        }
        let k = *seen.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            keys.len() - 1
        });
        row_key.push(Some(k));
    }
    Keys { keys, row_key }
}

pub(crate) fn resolve_inputs(udf: &LlmUdf, schema: &Schema) -> Result<Vec<(ColumnRef, usize)>, OpError> {
    udf.inputs.iter().map(|c| Ok((c.clone(), schema.resolve(c)?))).collect()
}

pub(crate) fn bind(cols: &[(ColumnRef, usize)], key: &Row) -> Vec<(ColumnRef, Value)> {
    cols.iter().zip(key).map(|((c, _), v)| (c.clone(), v.clone())).collect()
}

/// A single value as is; several as `name: value` pairs.
pub(crate) fn render_input(cols: &[(ColumnRef, usize)], key: &Row) -> String {
    match key.as_slice() {
        [one] => one.render(),
        _ => cols
            .iter()
            .zip(key)
            .map(|((c, _), v)| format!("{}: {}", c.name, v.render()))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

pub(crate) fn format_for(ty: TypeTag) -> &'static str {
    match ty {
        TypeTag::Int => "an integer",
        TypeTag::Float => "a number",
        TypeTag::Bool => "yes or no",
        TypeTag::Text => "text",
    }
}

fn tuple_format(fields: &[(String, TypeTag)]) -> String {
    let keys: Vec<String> = fields.iter().map(|(n, t)| format!("\"{n}\" ({})", format_for(*t))).collect();
    format!("a JSON object with keys {}", keys.join(", "))
}

fn params(udf: &LlmUdf) -> DecodeParams {
    DecodeParams::for_model(&udf.model)
}

fn prompts_per_key(template: &str, udf: &LlmUdf, cols: &[(ColumnRef, usize)], keys: &Keys, extra: &[(&str, &str)]) -> Vec<String> {
    keys.keys
        .iter()
        .map(|key| {
            let input = render_input(cols, key);
            let expression = udf.instantiate(&bind(cols, key));
            let mut vars = vec![("input", input.as_str()), ("expression", expression.as_str())];
            vars.extend_from_slice(extra);
            render(template, &vars)
        })
        .collect()
}

pub(crate) fn semantic_select(ctx: &Ctx, rel: &Relation, udf: &LlmUdf) -> Result<(Relation, OpInfo), OpError> {
    let cols = resolve_inputs(udf, &rel.schema)?;
    let keys = distinct_keys(rel, &cols.iter().map(|(_, i)| *i).collect::<Vec<_>>());
    let mut info = OpInfo::default();
    let keep: Vec<bool> = if ctx.config.stub_llm {
        vec![true; keys.keys.len()]
    } else {
        let prompts = prompts_per_key(&ctx.config.templates.select, udf, &cols, &keys, &[]);
        info.prompts = prompts.len();
        ctx.run(&prompts, &params(udf), &parse_bool)?.into_iter().collect::<Result<_, _>>()?
    };
    info.detail = Some(format!("{} distinct input(s)", keys.keys.len()));
    let rows = rel
        .rows
        .iter()
        .zip(&keys.row_key)
        .filter(|(_, k)| match k {
            Some(k) => keep[*k],
            None => ctx.config.stub_llm,
        })
        .map(|(r, _)| r.clone())
        .collect();
    Ok((Relation { name: rel.name.clone(), schema: rel.schema.clone(), rows }, info))
}

pub(crate) fn semantic_project(ctx: &Ctx, rel: &Relation, udf: &LlmUdf, out: Schema) -> Result<(Relation, OpInfo), OpError> {
    let fields: Vec<(String, TypeTag)> = out.columns()[rel.schema.len()..].iter().map(|c| (c.name.clone(), c.ty)).collect();
    let cols = resolve_inputs(udf, &rel.schema)?;
    let keys = distinct_keys(rel, &cols.iter().map(|(_, i)| *i).collect::<Vec<_>>());
    let mut info = OpInfo { detail: Some(format!("{} distinct input(s)", keys.keys.len())), ..OpInfo::default() };
    let nulls = vec![Value::Null; fields.len()];
    let values: Vec<Vec<Value>> = if ctx.config.stub_llm {
        vec![nulls.clone(); keys.keys.len()]
    } else {
        let tuple = matches!(udf.output, OutputKind::Tuple(_));
        let format = if tuple { tuple_format(&fields) } else { format_for(fields[0].1).to_string() };
        let prompts = prompts_per_key(&ctx.config.templates.project, udf, &cols, &keys, &[("format", &format)]);
        info.prompts = prompts.len();
        let parse = |text: &str| -> Result<Vec<Value>, String> {
            if tuple {
                parse_tuple(text, &fields)
            } else {
                parse_value(text, fields[0].1).map(|v| vec![v])
            }
        };
        ctx.run(&prompts, &params(udf), &parse)?.into_iter().collect::<Result<_, _>>()?
    };
    let rows = rel
        .rows
        .iter()
        .zip(&keys.row_key)
        .map(|(r, k)| {
            let mut row = r.clone();
            let vals = k.map(|k| &values[k]).unwrap_or(&nulls);
            row.extend(vals.iter().zip(&fields).map(|(v, (_, t))| conform(v.clone(), *t)));
            row
        })
        .collect();
    Ok((Relation { name: rel.name.clone(), schema: out, rows }, info))
}

/// Ranks the distinct keys by pairwise wins (Copeland), ties broken by first
/// appearance. `k` counts distinct keys; rows with a null key come last as
/// one group.
pub(crate) fn semantic_topk(ctx: &Ctx, rel: &Relation, udf: &LlmUdf, k: Option<usize>) -> Result<(Relation, OpInfo), OpError> {
    let cols = resolve_inputs(udf, &rel.schema)?;
    let keys = distinct_keys(rel, &cols.iter().map(|(_, i)| *i).collect::<Vec<_>>());
    let n = keys.keys.len();
    let mut info = OpInfo::default();
    let mut rank: Vec<usize> = (0..n).collect();
    if !ctx.config.stub_llm && n > 1 {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let prompts: Vec<String> = pairs
            .iter()
            .map(|(i, j)| {
                let a = render_input(&cols, &keys.keys[*i]);
                let b = render_input(&cols, &keys.keys[*j]);
                render(&ctx.config.templates.topk, &[("expression", &udf.expression), ("a", &a), ("b", &b)])
            })
            .collect();
        info.prompts = prompts.len();
        let answers = ctx.run(&prompts, &params(udf), &parse_choice)?;
        let mut wins = vec![0usize; n];
        for ((i, j), a) in pairs.iter().zip(answers) {
            wins[if a? { *i } else { *j }] += 1;
        }
        rank.sort_by(|a, b| wins[*b].cmp(&wins[*a]).then(a.cmp(b)));
    }
    info.detail = Some(format!("{n} distinct key(s) ranked"));
    let groups = k.unwrap_or(usize::MAX);
    let mut rows = Vec::new();
    for key in rank.iter().take(groups) {
        rows.extend(rel.rows.iter().zip(&keys.row_key).filter(|(_, rk)| **rk == Some(*key)).map(|(r, _)| r.clone()));
    }
    if n < groups {
        rows.extend(rel.rows.iter().zip(&keys.row_key).filter(|(_, rk)| rk.is_none()).map(|(r, _)| r.clone()));
    }
    Ok((Relation { name: rel.name.clone(), schema: rel.schema.clone(), rows }, info))
}

/// Greedy split of `lines` into chunks whose rendered prompt stays within
/// `budget` tokens; every chunk holds at least one line.
fn chunk_lines(lines: &[String], overhead: u64, budget: u64) -> Vec<Vec<String>> {
    let mut chunks: Vec<Vec<String>> = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    let mut used = overhead;
    for line in lines {
        let t = estimate_tokens(line) + 1;
        if !cur.is_empty() && used + t > budget {
            chunks.push(std::mem::take(&mut cur));
            used = overhead;
        }
        used += t;
        cur.push(line.clone());
    }
    if !cur.is_empty() {
        chunks.push(cur);
    }
    if chunks.len() > 1 && chunks.len() == lines.len() {
        // Every line alone exceeds the budget: combine in pairs so the
        // reduction still shrinks.
        chunks = lines.chunks(2).map(|c| c.to_vec()).collect();
    }
    chunks
}

enum Stage {
    Rows(Vec<String>),
    Partials(Vec<String>),
    Done(Value),
}

/// One call per group when the rows fit the token budget. Larger groups are
/// split into chunks answered separately, then the partial answers are
/// combined (recursively if they do not fit either).
pub(crate) fn semantic_aggregate(
    ctx: &Ctx,
    rel: &Relation,
    group_by: &[ColumnRef],
    udf: &LlmUdf,
    out: Schema,
) -> Result<(Relation, OpInfo), OpError> {
    let ty = out.column(out.len() - 1).ty;
    let mut info = OpInfo::default();
    if rel.rows.is_empty() {
        return Ok((Relation { name: rel.name.clone(), schema: out, rows: Vec::new() }, info));
    }
    let cols: Vec<(ColumnRef, usize)> = if udf.inputs.is_empty() {
        rel.schema.columns().iter().enumerate().map(|(i, c)| (c.reference(), i)).collect()
    } else {
        resolve_inputs(udf, &rel.schema)?
    };
    let header = cols.iter().map(|(c, _)| c.name.as_str()).collect::<Vec<_>>().join(" | ");
    let groups = group_rows(rel, group_by)?;
    let format = format_for(ty);
    let mut stages: Vec<Stage> = groups
        .iter()
        .map(|(_, members)| {
            let lines = members
                .iter()
                .map(|m| cols.iter().map(|(_, i)| rel.rows[*m][*i].render()).collect::<Vec<_>>().join(" | "))
                .collect();
            if ctx.config.stub_llm {
                Stage::Done(Value::Null)
            } else {
                Stage::Rows(lines)
            }
        })
        .collect();
    let budget = ctx.config.aggregate_budget_tokens as u64;
    let mut chunked_groups = 0usize;
    let mut first_round = true;
    loop {
        // (group, is_final, prompt)
        let mut jobs: Vec<(usize, bool, String)> = Vec::new();
        for (g, stage) in stages.iter().enumerate() {
            let (template, items, columns) = match stage {
                Stage::Done(_) => continue,
                Stage::Rows(lines) => (&ctx.config.templates.aggregate, lines, header.as_str()),
                Stage::Partials(parts) => (&ctx.config.templates.aggregate_combine, parts, ""),
            };
            let fill = |rows: &str| {
                render(template, &[("expression", &udf.expression), ("columns", columns), ("rows", rows), ("format", format)])
            };
            let chunks = chunk_lines(items, estimate_tokens(&fill("")), budget);
            if first_round && chunks.len() > 1 {
                chunked_groups += 1;
            }
            let last = chunks.len() == 1;
            for c in chunks {
                jobs.push((g, last, fill(&c.join("\n"))));
            }
        }
        first_round = false;
        if jobs.is_empty() {
            break;
        }
        let prompts: Vec<String> = jobs.iter().map(|(_, _, p)| p.clone()).collect();
        info.prompts += prompts.len();
        let finals: Vec<bool> = jobs.iter().map(|(_, f, _)| *f).collect();
        let answers = ctx.run_indexed(&prompts, &params(udf), &|i: usize, text: &str| {
            if finals[i] {
                parse_value(text, ty)
            } else if text.trim().is_empty() {
                Err("empty answer".to_string())
            } else {
                Ok(Value::Text(text.trim().to_string()))
            }
        })?;
        let mut partials: HashMap<usize, Vec<String>> = HashMap::new();
        for ((g, last, _), a) in jobs.iter().zip(answers) {
            let v = a?;
            if *last {
                stages[*g] = Stage::Done(conform(v, ty));
            } else {
                let parts = partials.entry(*g).or_default();
                parts.push(format!("Part {}: {}", parts.len() + 1, v.render()));
            }
        }
        for (g, parts) in partials {
            stages[g] = Stage::Partials(parts);
        }
    }
    if chunked_groups > 0 {
        info.detail = Some(format!("{} group(s), {chunked_groups} split to fit {budget} tokens", groups.len()));
    } else {
        info.detail = Some(format!("{} group(s)", groups.len()));
    }
    let rows = groups
        .into_iter()
        .zip(stages)
        .map(|((key, _), stage)| {
            let mut row = key;
            row.push(match stage {
                Stage::Done(v) => v,
                _ => Value::Null,
            });
            row
        })
        .collect();
    Ok((Relation { name: rel.name.clone(), schema: out, rows }, info))
}
