//! Scalar cell values and their type tags.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Type tag of a column or a non-null value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeTag {
    Bool,
    Int,
    Float,
    Text,
}

impl TypeTag {
    /// Name used in HRA text and in the semantic data model document.
    pub fn keyword(self) -> &'static str {
        match self {
            TypeTag::Bool => "bool",
            TypeTag::Int => "integer",
            TypeTag::Float => "float",
            TypeTag::Text => "text",
        }
    }

    /// SQL-flavoured name shown to the model in schema descriptions.
    pub fn sql_name(self) -> &'static str {
        match self {
            TypeTag::Bool => "BOOLEAN",
            TypeTag::Int => "INTEGER",
            TypeTag::Float => "REAL",
            TypeTag::Text => "TEXT",
        }
    }

    pub fn from_keyword(s: &str) -> Option<TypeTag> {
        match s.to_ascii_lowercase().as_str() {
            "bool" | "boolean" => Some(TypeTag::Bool),
            "int" | "integer" | "bigint" => Some(TypeTag::Int),
            "float" | "real" | "double" => Some(TypeTag::Float),
            "text" | "varchar" | "string" => Some(TypeTag::Text),
            _ => None,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, TypeTag::Int | TypeTag::Float)
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A tagged scalar. Text is kept byte-for-byte as loaded.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "lowercase")]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot compare {left} with {right}")]
pub struct TypeMismatch {
    pub left: TypeTag,
    pub right: TypeTag,
}

impl Value {
    pub fn type_tag(&self) -> Option<TypeTag> {
        match self {
            Value::Null => None,
            Value::Bool(_) => Some(TypeTag::Bool),
            Value::Int(_) => Some(TypeTag::Int),
            Value::Float(_) => Some(TypeTag::Float),
            Value::Text(_) => Some(TypeTag::Text),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    /// SQL-style comparison. `Ok(None)` when either side is null; an error when
    /// both sides are non-null with different tags.
    pub fn sql_cmp(&self, other: &Value) -> Result<Option<Ordering>, TypeMismatch> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => Ok(None),
            (Value::Bool(a), Value::Bool(b)) => Ok(Some(a.cmp(b))),
            (Value::Int(a), Value::Int(b)) => Ok(Some(a.cmp(b))),
            (Value::Float(a), Value::Float(b)) => Ok(Some(a.total_cmp(b))),
            (Value::Text(a), Value::Text(b)) => Ok(Some(a.as_bytes().cmp(b.as_bytes()))),
            (a, b) => Err(TypeMismatch {
                left: a.type_tag().unwrap(),
                right: b.type_tag().unwrap(),
            }),
        }
    }

    /// Total order used for sorting: nulls last, then by tag, then by value.
    pub fn sort_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Null, Value::Null) => Ordering::Equal,
            (Value::Null, _) => Ordering::Greater,
            (_, Value::Null) => Ordering::Less,
            _ => match self.sql_cmp(other) {
                Ok(Some(o)) => o,
                _ => self.type_tag().cmp(&other.type_tag()),
            },
        }
    }

    /// Rendering used inside prompts and result tables.
    pub fn render(&self) -> String {
        match self {
            Value::Null => "NULL".to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_float(*x),
            Value::Text(s) => s.clone(),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    fn hash_key(&self) -> (u8, u64, &[u8]) {
        match self {
            Value::Null => (0, 0, &[]),
            Value::Bool(b) => (1, *b as u64, &[]),
            Value::Int(i) => (2, *i as u64, &[]),
            Value::Float(x) => (3, canonical_bits(*x), &[]),
            Value::Text(s) => (4, 0, s.as_bytes()),
        }
    }
}

fn canonical_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else if x.is_nan() {
        f64::NAN.to_bits()
    } else {
        x.to_bits()
    }
}

/// Floats always carry a decimal point or exponent so they re-read as floats.
pub fn format_float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) || !x.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

/// Structural equality: null equals null, floats compare by canonical bits.
/// This is the grouping/deduplication notion, not SQL `=`.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.hash_key() == other.hash_key()
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.hash_key().hash(state);
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}
