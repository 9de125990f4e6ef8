//! Loading CSV tables listed in a catalog file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::relation::{Column, Database, Relation, Schema};
use crate::value::{TypeTag, Value};

use super::{build_model, DescriptionFile, ModelError, SemanticDataModel};

/// `tables` maps table names to CSV paths; paths are relative to the
/// catalog file's directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CatalogFile {
    pub tables: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub descriptions: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid catalog {path}: {source}")]
    Catalog { path: PathBuf, source: serde_yaml::Error },
    #[error("{path}: row {row}: {message}")]
    Csv { path: PathBuf, row: usize, message: String },
    #[error("{path}: missing header row")]
    MissingHeader { path: PathBuf },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ModelError },
}

#[derive(Debug, Clone)]
pub struct LoadedCatalog {
    pub database: Database,
    pub model: SemanticDataModel,
}

pub fn load_catalog(path: &Path) -> Result<LoadedCatalog, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.into(), source })?;
    let catalog: CatalogFile =
        serde_yaml::from_str(&text).map_err(|source| IngestError::Catalog { path: path.into(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut db = Database::new();
    for (name, file) in &catalog.tables {
        db.insert(load_csv(name, &base.join(file))?);
    }
    let descriptions = match &catalog.descriptions {
        Some(p) => {
            let p = base.join(p);
            let text = std::fs::read_to_string(&p).map_err(|source| IngestError::Io { path: p.clone(), source })?;
            Some(DescriptionFile::parse(&text).map_err(|e| IngestError::Model { path: p, source: e.into() })?)
        }
        None => None,
    };
    let model =
        build_model(&db, descriptions.as_ref()).map_err(|source| IngestError::Model { path: path.into(), source })?;
    Ok(LoadedCatalog { database: db, model })
}

/// Reads a CSV with a header row. Column types are inferred over non-empty
/// cells: integer, then float, then boolean, else text. Empty cells are null.
pub fn load_csv(name: &str, path: &Path) -> Result<Relation, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, 1, e))?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(IngestError::MissingHeader { path: path.into() });
    }
    let mut raw: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let rec = rec.map_err(|e| csv_error(path, row, e))?;
        if rec.len() != header.len() {
            return Err(IngestError::Csv {
                path: path.into(),
                row,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        raw.push(rec.iter().map(str::to_string).collect());
    }
    let types: Vec<TypeTag> = (0..header.len()).map(|c| infer_type(raw.iter().map(|r| r[c].as_str()))).collect();
    let schema = Schema::new(header.iter().zip(&types).map(|(h, t)| Column::new(h, *t)).collect()).map_err(|e| {
        IngestError::Csv { path: path.into(), row: 1, message: e.to_string() }
    })?;
    let rows = raw
        .into_iter()
        .map(|r| r.into_iter().zip(&types).map(|(cell, t)| convert(cell, *t)).collect())
        .collect();
    Relation::new(name, schema, rows).map_err(|e| IngestError::Csv { path: path.into(), row: 0, message: e.to_string() })
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> IngestError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(row);
    IngestError::Csv { path: path.into(), row, message: e.to_string() }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn infer_type<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> TypeTag {
    let present = cells.filter(|c| !c.is_empty());
    if present.clone().next().is_none() {
        TypeTag::Text
    } else if present.clone().all(|c| c.parse::<i64>().is_ok()) {
        TypeTag::Int
    } else if present.clone().all(|c| c.parse::<f64>().is_ok()) {
        TypeTag::Float
    } else if present.clone().all(|c| parse_bool(c).is_some()) {
        TypeTag::Bool
    } else {
        TypeTag::Text
    }
}

fn convert(cell: String, ty: TypeTag) -> Value {
    if cell.is_empty() {
        return Value::Null;
    }
    match ty {
        TypeTag::Int => Value::Int(cell.parse().expect("checked during inference")),
        TypeTag::Float => Value::Float(cell.parse().expect("checked during inference")),
        TypeTag::Bool => Value::Bool(parse_bool(&cell).expect("checked during inference")),
        TypeTag::Text => Value::Text(cell),
    }
}
