//! Semantic joins: nested-loop over distinct key pairs, and smart batching
//! where a sizing call picks batch sizes and each call returns the matching
//! pairs of one batch pair.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::backend::{DecodeParams, RetryError};
use crate::relation::{Relation, Row, Schema};
use crate::udf::LlmUdf;

use super::parse_output::{parse_batch_sizes, parse_bool, parse_pairs};
use super::semantic::{bind, distinct_keys, render_input, Keys};
use super::templates::render;
use super::{Ctx, JoinStrategy, OpError, OpInfo};

/// Partition of the distinct key sets into order-preserving batches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchPlan {
    pub b1: usize,
    pub b2: usize,
    pub batches1: Vec<Vec<usize>>,
    pub batches2: Vec<Vec<usize>>,
    pub sizing_call_used: bool,
}

impl BatchPlan {
    pub fn new(n1: usize, n2: usize, b1: usize, b2: usize, sizing_call_used: bool) -> Self {
        let chunk = |n: usize, b: usize| -> Vec<Vec<usize>> {
            (0..n).collect::<Vec<_>>().chunks(b.max(1)).map(|c| c.to_vec()).collect()
        };
        BatchPlan { b1, b2, batches1: chunk(n1, b1), batches2: chunk(n2, b2), sizing_call_used }
    }

    /// Calls when no batch needs splitting.
    pub fn expected_calls(&self) -> usize {
        usize::from(self.sizing_call_used) + self.batches1.len() * self.batches2.len()
    }
}

/// Clamps a proposed batch size to `[1, min(n, max)]`.
pub fn clamp_batch(b: usize, n: usize, max: usize) -> usize {
    b.clamp(1, n.min(max).max(1))
}

pub(crate) fn semantic_join(
    ctx: &Ctx,
    l: &Relation,
    r: &Relation,
    udf: &LlmUdf,
    out: Schema,
) -> Result<(Relation, OpInfo), OpError> {
    let (mut lcols, mut rcols) = (Vec::new(), Vec::new());
    for c in &udf.inputs {
        match l.schema.resolve(c) {
            Ok(i) => lcols.push((c.clone(), i)),
            Err(_) => rcols.push((c.clone(), r.schema.resolve(c)?)),
        }
    }
    let lk = distinct_keys(l, &lcols.iter().map(|(_, i)| *i).collect::<Vec<_>>());
    let rk = distinct_keys(r, &rcols.iter().map(|(_, i)| *i).collect::<Vec<_>>());
    let (n1, n2) = (lk.keys.len(), rk.keys.len());
    let mut info = OpInfo::default();
    let matches: BTreeSet<(usize, usize)> = if n1 == 0 || n2 == 0 {
        BTreeSet::new()
    } else if ctx.config.stub_llm {
        (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect()
    } else {
        let strategy = match ctx.config.join_strategy {
            JoinStrategy::Auto if n1 * n2 <= ctx.config.auto_nested_limit => JoinStrategy::Nested,
            JoinStrategy::Auto => JoinStrategy::Smart,
            s => s,
        };
        let side = Side { udf, lcols: &lcols, rcols: &rcols, lk: &lk, rk: &rk };
        match strategy {
            JoinStrategy::Smart => smart(ctx, &side, &mut info)?,
            _ => {
                let pairs: Vec<(usize, usize)> = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
                info.detail = Some(format!("nested loop over {n1} x {n2} distinct keys"));
                nested(ctx, &side, &pairs, &mut info)?
            }
        }
    };
    let mut rows = Vec::new();
    for (a, lrow) in l.rows.iter().enumerate() {
        let Some(i) = lk.row_key[a] else { continue };
        for (b, rrow) in r.rows.iter().enumerate() {
            let Some(j) = rk.row_key[b] else { continue };
            if matches.contains(&(i, j)) {
                let mut row: Row = lrow.clone();
                row.extend(rrow.iter().cloned());
                rows.push(row);
            }
        }
    }
    Ok((Relation { name: format!("{}_{}", l.name, r.name), schema: out, rows }, info))
}

struct Side<'a> {
    udf: &'a LlmUdf,
    lcols: &'a [(crate::relation::ColumnRef, usize)],
    rcols: &'a [(crate::relation::ColumnRef, usize)],
    lk: &'a Keys,
    rk: &'a Keys,
}

impl Side<'_> {
    fn left(&self, i: usize) -> String {
        render_input(self.lcols, &self.lk.keys[i])
    }

    fn right(&self, j: usize) -> String {
        render_input(self.rcols, &self.rk.keys[j])
    }
}

fn params(udf: &LlmUdf) -> DecodeParams {
    DecodeParams::for_model(&udf.model)
}

/// One yes/no call per key pair.
fn nested(ctx: &Ctx, s: &Side, pairs: &[(usize, usize)], info: &mut OpInfo) -> Result<BTreeSet<(usize, usize)>, OpError> {
    let prompts: Vec<String> = pairs
        .iter()
        .map(|(i, j)| {
            let mut values = bind(s.lcols, &s.lk.keys[*i]);
            values.extend(bind(s.rcols, &s.rk.keys[*j]));
            let expression = s.udf.instantiate(&values);
            render(
                &ctx.config.templates.join,
                &[("left", &s.left(*i)), ("right", &s.right(*j)), ("expression", &expression)],
            )
        })
        .collect();
    info.prompts += prompts.len();
    let answers = ctx.run(&prompts, &params(s.udf), &parse_bool)?;
    let mut out = BTreeSet::new();
    for (p, a) in pairs.iter().zip(answers) {
        if a? {
            out.insert(*p);
        }
    }
    Ok(out)
}

fn numbered(items: impl Iterator<Item = String>) -> String {
    items.enumerate().map(|(n, s)| format!("{}. {s}", n + 1)).collect::<Vec<_>>().join("\n")
}

fn smart(ctx: &Ctx, s: &Side, info: &mut OpInfo) -> Result<BTreeSet<(usize, usize)>, OpError> {
    let (n1, n2) = (s.lk.keys.len(), s.rk.keys.len());
    // The first three distinct keys of each side, for determinism.
    let sizing = render(
        &ctx.config.templates.join_sizing,
        &[
            ("left_count", &n1.to_string()),
            ("right_count", &n2.to_string()),
            ("expression", &s.udf.expression),
            ("left_samples", &numbered((0..n1.min(3)).map(|i| s.left(i)))),
            ("right_samples", &numbered((0..n2.min(3)).map(|j| s.right(j)))),
        ],
    );
    info.prompts += 1;
    let (b1, b2) = ctx.run(&[sizing], &params(s.udf), &parse_batch_sizes)?.pop().expect("one answer")?;
    let max = ctx.config.max_batch;
    let plan = BatchPlan::new(n1, n2, clamp_batch(b1, n1, max), clamp_batch(b2, n2, max), true);
    info.detail = Some(format!(
        "smart batching: b1={} b2={} over {n1} x {n2} distinct keys, {} x {} batch pairs",
        plan.b1,
        plan.b2,
        plan.batches1.len(),
        plan.batches2.len()
    ));

    let mut work: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for a in &plan.batches1 {
        for b in &plan.batches2 {
            work.push((a.clone(), b.clone()));
        }
    }
    info.batch = Some(plan);
    let mut found = BTreeSet::new();
    let mut splits = 0usize;
    while !work.is_empty() {
        let prompts: Vec<String> = work
            .iter()
            .map(|(a, b)| {
                render(
                    &ctx.config.templates.join_batch,
                    &[
                        ("expression", &s.udf.expression),
                        ("left", &numbered(a.iter().map(|i| s.left(*i)))),
                        ("right", &numbered(b.iter().map(|j| s.right(*j)))),
                    ],
                )
            })
            .collect();
        info.prompts += prompts.len();
        let validators: Vec<(usize, usize)> = work.iter().map(|(a, b)| (a.len(), b.len())).collect();
        let answers = ctx.run_indexed(&prompts, &params(s.udf), &|idx: usize, text: &str| {
            let (x, y) = validators[idx];
            parse_pairs(text, x, y)
        })?;
        let mut next = Vec::new();
        let mut singles = Vec::new();
        for ((a, b), ans) in work.into_iter().zip(answers) {
            match ans {
                Ok(pairs) => {
                    for (x, y) in pairs {
                        found.insert((a[x], b[y]));
                    }
                }
                Err(RetryError::Exhausted { .. }) => {
                    splits += 1;
                    if a.len() == 1 && b.len() == 1 {
                        singles.push((a[0], b[0]));
                    } else if a.len() >= b.len() {
                        let (h1, h2) = a.split_at(a.len().div_ceil(2));
                        next.push((h1.to_vec(), b.clone()));
                        next.push((h2.to_vec(), b));
                    } else {
                        let (h1, h2) = b.split_at(b.len().div_ceil(2));
                        next.push((a.clone(), h1.to_vec()));
                        next.push((a, h2.to_vec()));
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        if !singles.is_empty() {
            found.extend(nested(ctx, s, &singles, info)?);
        }
        work = next;
    }
    if splits > 0 {
        if let Some(d) = &mut info.detail {
            d.push_str(&format!(", {splits} unparseable batch answer(s) split"));
        }
    }
    Ok(found)
}
