//! Question-specific narrowing of the semantic data model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Deserialize;

use crate::backend::{complete_with_retry, DecodeParams, LlmBackend, RetryPolicy};
use crate::relation::ColumnRef;
use crate::text::extract_json;

use super::{Relationship, SemanticDataModel, TableSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub model: SemanticDataModel,
    pub warnings: Vec<String>,
    /// The backend never produced a usable selection, so the full model was kept.
    pub fell_back: bool,
}

#[derive(Deserialize)]
struct Selection {
    columns: Vec<String>,
    #[serde(default)]
    notes: Vec<usize>,
}

fn filter_prompt(model: &SemanticDataModel, question: &str) -> String {
    let mut p = String::from(
        "Select the database columns needed to answer the question. Include columns used for filtering, joining, grouping, ordering, output, and any column a natural-language function would need to read.\n\n",
    );
    p.push_str("COLUMNS:\n");
    for t in model.tables() {
        for c in &t.columns {
            p.push_str(&format!("- {}.{} ({})", t.name, c.name, c.ty.sql_name()));
            if !c.description.is_empty() {
                p.push_str(&format!(": {}", c.description));
            }
            if !c.samples.is_empty() {
                p.push_str(&format!(" e.g. {}", c.samples.join(", ")));
            }
            p.push('\n');
        }
    }
    if !model.relationships().is_empty() {
        p.push_str("\nRELATIONSHIPS:\n");
        for r in model.relationships() {
            p.push_str(&format!("- {} = {}\n", r.left, r.right));
        }
    }
    if !model.domain_notes().is_empty() {
        p.push_str("\nNOTES:\n");
        for (i, n) in model.domain_notes().iter().enumerate() {
            p.push_str(&format!("{i}. [{}] {}\n", n.kind.keyword(), n.text));
        }
    }
    p.push_str(&format!("\nQUESTION: {question}\n\n"));
    p.push_str(
        "Respond with JSON only: {\"columns\": [\"table.column\", ...], \"notes\": [note numbers that apply]}",
    );
    p
}

fn parse_selection(text: &str) -> Result<Selection, String> {
    let json = extract_json(text).ok_or_else(|| "no JSON object found".to_string())?;
    serde_json::from_str::<Selection>(json).map_err(|e| format!("invalid selection: {e}"))
}

/// Keeps the backend-selected columns, identifying columns of the retained
/// tables, the relationships (and bridging tables) that connect them, and
/// the referenced notes. Falls back to the full model when the backend
/// never returns a parseable selection or selects nothing valid.
pub fn filter_model(
    model: &SemanticDataModel,
    question: &str,
    backend: &dyn LlmBackend,
    policy: RetryPolicy,
) -> FilterOutcome {
    let prompt = filter_prompt(model, question);
    let selection = match complete_with_retry(backend, &prompt, &DecodeParams::default(), policy, parse_selection) {
        Ok(s) => s,
        Err(e) => {
            return FilterOutcome {
                model: model.clone(),
                warnings: vec![format!("schema filtering failed, using the full model: {e}")],
                fell_back: true,
            }
        }
    };

    let mut warnings = Vec::new();
    let mut keep: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for name in &selection.columns {
        let r = ColumnRef::parse(name.trim());
        if model.has_column(&r) {
            keep.entry(r.qualifier.clone().unwrap()).or_default().insert(r.name);
        } else {
            warnings.push(format!("ignoring unknown column `{name}` selected during schema filtering"));
        }
    }
    if keep.is_empty() {
        warnings.push("schema filtering selected no known column, using the full model".into());
        return FilterOutcome { model: model.clone(), warnings, fell_back: true };
    }

    let wanted: Vec<String> = keep.keys().cloned().collect();
    let (edges, bridged) = connect(model, &wanted, &mut warnings);
    for t in bridged {
        keep.entry(t).or_default();
    }
    for r in &edges {
        for end in [r.left_ref(), r.right_ref()] {
            keep.entry(end.qualifier.unwrap()).or_default().insert(end.name);
        }
    }
    let tables: Vec<TableSpec> = model
        .tables()
        .iter()
        .filter_map(|t| {
            let cols = keep.get(&t.name)?;
            Some(TableSpec {
                name: t.name.clone(),
                description: t.description.clone(),
                columns: t.columns.iter().filter(|c| c.identifying || cols.contains(&c.name)).cloned().collect(),
            })
        })
        .collect();
    let relationships: Vec<Relationship> =
        model.relationships().iter().filter(|r| edges.contains(r)).cloned().collect();
    let mut notes = Vec::new();
    for i in selection.notes.iter().collect::<BTreeSet<_>>() {
        match model.domain_notes().get(*i) {
            Some(n) => notes.push(n.clone()),
            None => warnings.push(format!("ignoring unknown note {i}")),
        }
    }
    let filtered = SemanticDataModel::new(tables, relationships, notes).expect("sub-models of a valid model are valid");
    FilterOutcome { model: filtered, warnings, fell_back: false }
}

/// Relationships connecting `tables`, grown as shortest paths from the
/// lexicographically smallest table. Returns the edges and any extra tables
/// needed to bridge the retained ones.
fn connect(model: &SemanticDataModel, tables: &[String], warnings: &mut Vec<String>) -> (Vec<Relationship>, Vec<String>) {
    let mut adj: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    for (i, r) in model.relationships().iter().enumerate() {
        let (a, b) = r.tables();
        if a == b {
            continue;
        }
        adj.entry(a.clone()).or_default().push((b.clone(), i));
        adj.entry(b).or_default().push((a, i));
    }
    for v in adj.values_mut() {
        v.sort();
    }
    let mut sorted = tables.to_vec();
    sorted.sort();
    let mut connected: BTreeSet<String> = BTreeSet::new();
    let mut edges: BTreeSet<usize> = BTreeSet::new();
    let mut bridged = Vec::new();
    let Some(first) = sorted.first() else {
        return (Vec::new(), Vec::new());
    };
    connected.insert(first.clone());
    for target in &sorted[1..] {
        if connected.contains(target) {
            continue;
        }
        // BFS from the connected component to `target`.
        let mut prev: BTreeMap<String, (String, usize)> = BTreeMap::new();
        let mut queue: VecDeque<String> = connected.iter().cloned().collect();
        let mut seen: BTreeSet<String> = connected.clone();
        let mut found = false;
        while let Some(t) = queue.pop_front() {
            if &t == target {
                found = true;
                break;
            }
            for (n, e) in adj.get(&t).into_iter().flatten() {
                if seen.insert(n.clone()) {
                    prev.insert(n.clone(), (t.clone(), *e));
                    queue.push_back(n.clone());
                }
            }
        }
        if !found {
            warnings.push(format!("table `{target}` is not connected to `{first}` by any relationship"));
            connected.insert(target.clone());
            continue;
        }
        let mut cur = target.clone();
        while let Some((p, e)) = prev.get(&cur).cloned() {
            edges.insert(e);
            if !connected.contains(&cur) && !tables.contains(&cur) {
                bridged.push(cur.clone());
            }
            connected.insert(cur.clone());
            cur = p;
        }
    }
    let rels = edges.into_iter().map(|i| model.relationships()[i].clone()).collect();
    (rels, bridged)
}
