//! Building a model from loaded relations and a description file.
//!
//! Description files are line based:
//!
//! ```text
//! # comment
//! table schools: California public schools
//! column schools.County: county name [identifying]
//! fk satscores.cds -> schools.CDSCode
//! note computation_rule: excellence rate = NumGE1500 / NumTstTakr
//! ```

use std::collections::BTreeMap;

use crate::relation::{ColumnRef, Database};
use crate::value::Value;

use super::{ColumnSpec, DomainNote, ModelError, NoteKind, Relationship, SemanticDataModel, TableSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("description file line {line}: {message}")]
pub struct DescriptionError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptionFile {
    pub tables: BTreeMap<String, (usize, String)>,
    /// `table.column` → (line, description, identifying)
    pub columns: BTreeMap<String, (usize, String, bool)>,
    pub foreign_keys: Vec<(usize, ColumnRef, ColumnRef)>,
    pub notes: Vec<DomainNote>,
}

const IDENTIFYING: &str = "[identifying]";

impl DescriptionFile {
    pub fn parse(text: &str) -> Result<Self, DescriptionError> {
        let mut out = DescriptionFile::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| DescriptionError { line, message };
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (keyword, rest) = l.split_once(char::is_whitespace).ok_or_else(|| err(format!("expected a directive, found `{l}`")))?;
            let rest = rest.trim();
            match keyword {
                "table" => {
                    let (name, desc) = split_colon(rest).ok_or_else(|| err("expected `table <name>: <description>`".into()))?;
                    if name.contains('.') || name.is_empty() {
                        return Err(err(format!("invalid table name `{name}`")));
                    }
                    out.tables.insert(name.to_string(), (line, desc.to_string()));
                }
                "column" => {
                    let (name, desc) =
                        split_colon(rest).ok_or_else(|| err("expected `column <table>.<column>: <description>`".into()))?;
                    if ColumnRef::parse(name).qualifier.is_none() {
                        return Err(err(format!("column `{name}` must be written as table.column")));
                    }
                    let (desc, identifying) = match desc.strip_suffix(IDENTIFYING) {
                        Some(d) => (d.trim_end(), true),
                        None => (desc, false),
                    };
                    out.columns.insert(name.to_string(), (line, desc.to_string(), identifying));
                }
                "fk" => {
                    let (a, b) = rest.split_once("->").ok_or_else(|| err("expected `fk <table.column> -> <table.column>`".into()))?;
                    let (a, b) = (ColumnRef::parse(a.trim()), ColumnRef::parse(b.trim()));
                    if a.qualifier.is_none() || b.qualifier.is_none() {
                        return Err(err("foreign key endpoints must be written as table.column".into()));
                    }
                    out.foreign_keys.push((line, a, b));
                }
                "note" => {
                    let (kind, text) = split_colon(rest).ok_or_else(|| err("expected `note <kind>: <text>`".into()))?;
                    let kind = NoteKind::from_keyword(kind).ok_or_else(|| {
                        err(format!("unknown note kind `{kind}` (expected computation_rule, semantic_mapping or terminology)"))
                    })?;
                    out.notes.push(DomainNote { kind, text: text.to_string() });
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        Ok(out)
    }
}

fn split_colon(s: &str) -> Option<(&str, &str)> {
    let (a, b) = s.split_once(':')?;
    Some((a.trim(), b.trim()))
}

/// First three distinct non-null renderings, in row order.
fn samples(db_values: impl Iterator<Item = Value>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in db_values {
        if v.is_null() {
            continue;
        }
        let s = v.render();
        if !out.contains(&s) {
            out.push(s);
            if out.len() == 3 {
                break;
            }
        }
    }
    out
}

/// One table spec per relation (in name order) with sample values from the
/// data; descriptions, relationships and notes come from `descriptions`.
pub fn build_model(db: &Database, descriptions: Option<&DescriptionFile>) -> Result<SemanticDataModel, ModelError> {
    let empty = DescriptionFile::default();
    let d = descriptions.unwrap_or(&empty);
    for (name, (line, _)) in &d.tables {
        if db.get(name).is_none() {
            return Err(DescriptionError { line: *line, message: format!("unknown table `{name}`") }.into());
        }
    }
    let has_column = |r: &ColumnRef| {
        r.qualifier
            .as_deref()
            .and_then(|t| db.get(t))
            .is_some_and(|rel| rel.schema.columns().iter().any(|c| c.name == r.name))
    };
    for (name, (line, _, _)) in &d.columns {
        if !has_column(&ColumnRef::parse(name)) {
            return Err(DescriptionError { line: *line, message: format!("unknown column `{name}`") }.into());
        }
    }
    for (line, a, b) in &d.foreign_keys {
        for end in [a, b] {
            if !has_column(end) {
                return Err(DescriptionError { line: *line, message: format!("unknown column `{end}`") }.into());
            }
        }
    }

    let tables = db
        .relations()
        .map(|rel| {
            let columns = rel
                .schema
                .columns()
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let key = format!("{}.{}", rel.name, c.name);
                    let (description, identifying) = match d.columns.get(&key) {
                        Some((_, desc, id)) => (desc.clone(), *id),
                        None => (c.description.clone().unwrap_or_default(), false),
                    };
                    ColumnSpec {
                        name: c.name.clone(),
                        ty: c.ty,
                        samples: samples(rel.rows.iter().map(|r| r[i].clone())),
                        description,
                        identifying,
                    }
                })
                .collect();
            TableSpec {
                name: rel.name.clone(),
                description: d.tables.get(&rel.name).map(|(_, s)| s.clone()).unwrap_or_default(),
                columns,
            }
        })
        .collect();
    let relationships = d.foreign_keys.iter().map(|(_, a, b)| Relationship::new(a, b)).collect();
    SemanticDataModel::new(tables, relationships, d.notes.clone())
}
