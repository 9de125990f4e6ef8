//! The semantic data model: table and column descriptions with sample
//! values, foreign-key relationships, and free-form domain notes.

mod build;
mod filter;
mod ingest;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::plan::SchemaProvider;
use crate::relation::{Column, ColumnRef, Schema};
use crate::value::TypeTag;

pub use build::{build_model, DescriptionError, DescriptionFile};
pub use filter::{filter_model, FilterOutcome};
pub use ingest::{load_catalog, load_csv, CatalogFile, IngestError, LoadedCatalog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeTag,
    #[serde(default)]
    pub samples: Vec<String>,
    #[serde(default)]
    pub description: String,
    /// Column that names the entity a row describes; kept by filtering.
    #[serde(default, skip_serializing_if = "is_false")]
    pub identifying: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub columns: Vec<ColumnSpec>,
}

impl TableSpec {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn schema(&self) -> Schema {
        let cols = self
            .columns
            .iter()
            .map(|c| {
                let mut col = Column::new(&c.name, c.ty);
                if !c.description.is_empty() {
                    col.description = Some(c.description.clone());
                }
                col
            })
            .collect();
        Schema::new(cols).expect("column names are unique per table")
    }
}

/// An undirected link between two `table.column` endpoints.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relationship {
    pub left: String,
    pub right: String,
}

impl Relationship {
    pub fn new(left: &ColumnRef, right: &ColumnRef) -> Self {
        Relationship { left: left.to_string(), right: right.to_string() }
    }

    pub fn left_ref(&self) -> ColumnRef {
        ColumnRef::parse(&self.left)
    }

    pub fn right_ref(&self) -> ColumnRef {
        ColumnRef::parse(&self.right)
    }

    pub fn tables(&self) -> (String, String) {
        (self.left_ref().qualifier.unwrap_or_default(), self.right_ref().qualifier.unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    ComputationRule,
    SemanticMapping,
    Terminology,
}

impl NoteKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NoteKind::ComputationRule => "computation_rule",
            NoteKind::SemanticMapping => "semantic_mapping",
            NoteKind::Terminology => "terminology",
        }
    }

    pub fn from_keyword(s: &str) -> Option<NoteKind> {
        match s {
            "computation_rule" => Some(NoteKind::ComputationRule),
            "semantic_mapping" => Some(NoteKind::SemanticMapping),
            "terminology" => Some(NoteKind::Terminology),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainNote {
    pub kind: NoteKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SemanticDataModel {
    tables: Vec<TableSpec>,
    #[serde(default)]
    relationships: Vec<Relationship>,
    #[serde(default)]
    domain_notes: Vec<DomainNote>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("relationship endpoint `{0}` is not a column of the model")]
    DanglingRelationship(String),
    #[error("table `{table}` lists {count} sample values for `{column}`; at most 3 are allowed")]
    TooManySamples { table: String, column: String, count: usize },
    #[error("invalid model document: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error(transparent)]
    Description(#[from] DescriptionError),
}

impl SemanticDataModel {
    pub fn new(
        tables: Vec<TableSpec>,
        relationships: Vec<Relationship>,
        domain_notes: Vec<DomainNote>,
    ) -> Result<Self, ModelError> {
        let m = SemanticDataModel { tables, relationships, domain_notes };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), ModelError> {
        let mut names = BTreeSet::new();
        for t in &self.tables {
            if !names.insert(t.name.as_str()) {
                return Err(ModelError::DuplicateTable(t.name.clone()));
            }
            let mut cols = BTreeSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.as_str()) {
                    return Err(ModelError::DuplicateColumn(format!("{}.{}", t.name, c.name)));
                }
                if c.samples.len() > 3 {
                    return Err(ModelError::TooManySamples {
                        table: t.name.clone(),
                        column: c.name.clone(),
                        count: c.samples.len(),
                    });
                }
            }
        }
        for r in &self.relationships {
            for end in [&r.left, &r.right] {
                if !self.has_column(&ColumnRef::parse(end)) {
                    return Err(ModelError::DanglingRelationship(end.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn tables(&self) -> &[TableSpec] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&TableSpec> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.relationships
    }

    pub fn domain_notes(&self) -> &[DomainNote] {
        &self.domain_notes
    }

    /// Notes can be appended but never edited or removed.
    pub fn add_note(&mut self, note: DomainNote) {
        self.domain_notes.push(note);
    }

    /// Whether `t.c` is a column of the model.
    pub fn has_column(&self, r: &ColumnRef) -> bool {
        match &r.qualifier {
            Some(t) => self.table(t).is_some_and(|t| t.column(&r.name).is_some()),
            None => false,
        }
    }

    /// Every `table.column` in model order.
    pub fn column_refs(&self) -> Vec<ColumnRef> {
        self.tables
            .iter()
            .flat_map(|t| t.columns.iter().map(move |c| ColumnRef::qualified(&t.name, &c.name)))
            .collect()
    }

    /// Whether `self` is a sub-model of `other`.
    pub fn is_submodel_of(&self, other: &SemanticDataModel) -> bool {
        self.tables.iter().all(|t| {
            other.table(&t.name).is_some_and(|o| t.columns.iter().all(|c| o.column(&c.name) == Some(c)))
        }) && self.relationships.iter().all(|r| other.relationships.contains(r))
            && self.domain_notes.iter().all(|n| other.domain_notes.contains(n))
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("model serializes")
    }

    pub fn from_yaml(text: &str) -> Result<Self, ModelError> {
        let m: SemanticDataModel = serde_yaml::from_str(text)?;
        m.check()?;
        Ok(m)
    }

    /// Schema text shown to the model during generation.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            out.push_str(&format!("Table {}", t.name));
            if !t.description.is_empty() {
                out.push_str(&format!(": {}", t.description));
            }
            out.push('\n');
            for c in &t.columns {
                out.push_str(&format!("  - {} ({})", c.name, c.ty.sql_name()));
                if !c.description.is_empty() {
                    out.push_str(&format!(": {}", c.description));
                }
                if !c.samples.is_empty() {
                    let s: Vec<String> = c.samples.iter().map(|s| format!("`{s}`")).collect();
                    out.push_str(&format!(" e.g. {}", s.join(", ")));
                }
                out.push('\n');
            }
        }
        if !self.relationships.is_empty() {
            out.push_str("Relationships:\n");
            for r in &self.relationships {
                out.push_str(&format!("  - {} = {}\n", r.left, r.right));
            }
        }
        if !self.domain_notes.is_empty() {
            out.push_str("Domain notes:\n");
            for n in &self.domain_notes {
                out.push_str(&format!("  - [{}] {}\n", n.kind.keyword(), n.text));
            }
        }
        out
    }
}

impl SchemaProvider for SemanticDataModel {
    fn table_schema(&self, table: &str) -> Option<Schema> {
        self.table(table).map(TableSpec::schema)
    }
}

impl fmt::Display for SemanticDataModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}
