//! Schemas, relations and the in-memory database.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::{TypeTag, Value};

/// A reference to a column, optionally qualified by its source table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<String>,
    pub name: String,
}

impl ColumnRef {
    pub fn bare(name: impl Into<String>) -> Self {
        ColumnRef { qualifier: None, name: name.into() }
    }

    pub fn qualified(table: impl Into<String>, name: impl Into<String>) -> Self {
        ColumnRef { qualifier: Some(table.into()), name: name.into() }
    }

    /// Parses `table.column` or `column`.
    pub fn parse(s: &str) -> Self {
        match s.split_once('.') {
            Some((t, c)) => ColumnRef::qualified(t, c),
            None => ColumnRef::bare(s),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Source table for base columns; `None` for derived columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<String>,
    pub ty: TypeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: TypeTag) -> Self {
        Column { name: name.into(), qualifier: None, ty, description: None }
    }

    pub fn with_qualifier(mut self, q: impl Into<String>) -> Self {
        self.qualifier = Some(q.into());
        self
    }

    pub fn matches(&self, r: &ColumnRef) -> bool {
        self.name == r.name
            && match &r.qualifier {
                None => true,
                Some(q) => self.qualifier.as_deref() == Some(q.as_str()),
            }
    }

    pub fn reference(&self) -> ColumnRef {
        ColumnRef { qualifier: self.qualifier.clone(), name: self.name.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown column `{0}`")]
    Unknown(ColumnRef),
    #[error("ambiguous column `{0}`")]
    Ambiguous(ColumnRef),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("duplicate column `{0}` in schema")]
pub struct DuplicateColumn(pub ColumnRef);

/// Ordered column list. `(qualifier, name)` pairs are unique.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self, DuplicateColumn> {
        let mut s = Schema { columns: Vec::with_capacity(columns.len()) };
        for c in columns {
            s.push(c)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, column: Column) -> Result<(), DuplicateColumn> {
        if self
            .columns
            .iter()
            .any(|c| c.name == column.name && c.qualifier == column.qualifier)
        {
            return Err(DuplicateColumn(column.reference()));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn resolve(&self, r: &ColumnRef) -> Result<usize, ResolveError> {
        let mut found = None;
        for (i, c) in self.columns.iter().enumerate() {
            if c.matches(r) {
                if found.is_some() {
                    return Err(ResolveError::Ambiguous(r.clone()));
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| ResolveError::Unknown(r.clone()))
    }

    pub fn contains(&self, r: &ColumnRef) -> bool {
        self.resolve(r).is_ok()
    }

    /// Concatenation used by joins.
    pub fn concat(&self, other: &Schema) -> Result<Schema, DuplicateColumn> {
        let mut s = self.clone();
        for c in &other.columns {
            s.push(c.clone())?;
        }
        Ok(s)
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.reference().to_string()).collect()
    }
}

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelationError {
    #[error("row {row} has {got} values, schema has {expected} columns")]
    Arity { row: usize, got: usize, expected: usize },
    #[error("row {row}, column `{column}`: expected {expected}, found {found}")]
    Type { row: usize, column: String, expected: TypeTag, found: TypeTag },
}

/// A named bag of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub schema: Schema,
    pub rows: Vec<Row>,
}

impl Relation {
    pub fn new(name: impl Into<String>, schema: Schema, rows: Vec<Row>) -> Result<Self, RelationError> {
        let rel = Relation { name: name.into(), schema, rows };
        rel.check()?;
        Ok(rel)
    }

    pub fn empty(name: impl Into<String>, schema: Schema) -> Self {
        Relation { name: name.into(), schema, rows: Vec::new() }
    }

    /// Verifies arity and tags of every row.
    pub fn check(&self) -> Result<(), RelationError> {
        let expected = self.schema.len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != expected {
                return Err(RelationError::Arity { row: i, got: row.len(), expected });
            }
            for (v, c) in row.iter().zip(self.schema.columns()) {
                if let Some(t) = v.type_tag() {
                    if t != c.ty {
                        return Err(RelationError::Type {
                            row: i,
                            column: c.name.clone(),
                            expected: c.ty,
                            found: t,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows sorted by the total value order; used to compare bags.
    pub fn sorted_rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.sort_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        rows
    }

    /// Bag equality over identical column lists.
    pub fn bag_eq(&self, other: &Relation) -> bool {
        self.schema.names() == other.schema.names() && self.sorted_rows() == other.sorted_rows()
    }

    /// CSV rendering: header of column names, nulls as empty fields.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let header: Vec<String> = self.schema.columns().iter().map(|c| c.name.clone()).collect();
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|v| if v.is_null() { String::new() } else { v.render() })
                .collect();
            w.write_record(&fields).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    /// Fixed-width text table.
    pub fn to_pretty(&self) -> String {
        let header: Vec<String> = self.schema.columns().iter().map(|c| c.name.clone()).collect();
        let body: Vec<Vec<String>> =
            self.rows.iter().map(|r| r.iter().map(Value::render).collect()).collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            format!("| {} |", parts.join(" | "))
        };
        let sep = format!(
            "+{}+",
            widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("+")
        );
        let mut out = vec![sep.clone(), line(&header), sep.clone()];
        out.extend(body.iter().map(|r| line(r)));
        out.push(sep);
        out.push(format!("({} row{})", self.rows.len(), if self.rows.len() == 1 { "" } else { "s" }));
        out.join("\n")
    }
}

/// Named relations available to scans.
#[derive(Debug, Clone, Default)]
pub struct Database {
    relations: BTreeMap<String, Relation>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, relation: Relation) {
        self.relations.insert(relation.name.clone(), relation);
    }

    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Copy keeping only the first `limit` rows of every table.
    pub fn head(&self, limit: usize) -> Database {
        let relations = self
            .relations
            .iter()
            .map(|(k, r)| {
                let mut r = r.clone();
                r.rows.truncate(limit);
                (k.clone(), r)
            })
            .collect();
        Database { relations }
    }
}

impl FromIterator<Relation> for Database {
    fn from_iter<I: IntoIterator<Item = Relation>>(iter: I) -> Self {
        let mut db = Database::new();
        for r in iter {
            db.insert(r);
        }
        db
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(vec![
            Column::new("id", TypeTag::Int).with_qualifier("a"),
            Column::new("id", TypeTag::Int).with_qualifier("b"),
            Column::new("name", TypeTag::Text).with_qualifier("a"),
        ])
        .unwrap()
    }

    #[test]
    fn bare_reference_to_shared_name_is_ambiguous() {
        let s = schema();
        assert_eq!(s.resolve(&ColumnRef::bare("id")), Err(ResolveError::Ambiguous(ColumnRef::bare("id"))));
        assert_eq!(s.resolve(&ColumnRef::qualified("b", "id")), Ok(1));
        assert_eq!(s.resolve(&ColumnRef::bare("name")), Ok(2));
        assert!(matches!(s.resolve(&ColumnRef::bare("zip")), Err(ResolveError::Unknown(_))));
    }

    #[test]
    fn duplicate_columns_rejected() {
        let err = Schema::new(vec![Column::new("x", TypeTag::Int), Column::new("x", TypeTag::Text)]);
        assert!(err.is_err());
    }

    #[test]
    fn relation_checks_arity_and_tags() {
        let s = Schema::new(vec![Column::new("x", TypeTag::Int)]).unwrap();
        assert!(Relation::new("t", s.clone(), vec![vec![Value::Int(1)], vec![Value::Null]]).is_ok());
        assert!(matches!(
            Relation::new("t", s.clone(), vec![vec![Value::Int(1), Value::Int(2)]]),
            Err(RelationError::Arity { .. })
        ));
        assert!(matches!(
            Relation::new("t", s, vec![vec![Value::text("1")]]),
            Err(RelationError::Type { .. })
        ));
    }

    #[test]
    fn bag_equality_ignores_row_order_but_keeps_duplicates() {
        let s = Schema::new(vec![Column::new("x", TypeTag::Int)]).unwrap();
        let a = Relation::new("a", s.clone(), vec![vec![1.into()], vec![2.into()], vec![1.into()]]).unwrap();
        let b = Relation::new("b", s.clone(), vec![vec![2.into()], vec![1.into()], vec![1.into()]]).unwrap();
        let c = Relation::new("c", s, vec![vec![2.into()], vec![1.into()]]).unwrap();
        assert!(a.bag_eq(&b));
        assert!(!a.bag_eq(&c));
    }
}
