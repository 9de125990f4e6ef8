//! LLM user-defined functions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::relation::ColumnRef;
use crate::value::{TypeTag, Value};

/// Model identifier used when a UDF does not name one.
pub const DEFAULT_MODEL: &str = "default";

/// What a UDF returns, which also fixes the operators it may appear in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Boolean,
    Scalar(TypeTag),
    Tuple(Vec<(String, TypeTag)>),
    Aggregate(TypeTag),
}

impl fmt::Display for OutputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputKind::Boolean => f.write_str("boolean"),
            OutputKind::Scalar(t) => write!(f, "scalar({t})"),
            OutputKind::Tuple(fields) => {
                let parts: Vec<String> = fields.iter().map(|(n, t)| format!("{n} {t}")).collect();
                write!(f, "tuple({})", parts.join(", "))
            }
            OutputKind::Aggregate(t) => write!(f, "aggregate({t})"),
        }
    }
}

/// A function that prompts model `model` with the natural-language
/// `expression` instantiated over the `inputs` columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LlmUdf {
    pub name: String,
    pub expression: String,
    pub inputs: Vec<ColumnRef>,
    #[serde(default = "default_model")]
    pub model: String,
    pub output: OutputKind,
}

fn default_model() -> String {
    DEFAULT_MODEL.to_string()
}

impl LlmUdf {
    /// A UDF whose expression is its own name, as in `isAsian(nationality)`.
    pub fn named(name: impl Into<String>, inputs: Vec<ColumnRef>, output: OutputKind) -> Self {
        let name = name.into();
        LlmUdf { expression: name.clone(), name, inputs, model: default_model(), output }
    }

    pub fn with_expression(mut self, expression: impl Into<String>) -> Self {
        self.expression = expression.into();
        self
    }

    /// `{column}` placeholders in the expression, in order of appearance.
    pub fn placeholders(&self) -> Vec<String> {
        placeholders(&self.expression)
    }

    /// Placeholders that do not name one of the input columns.
    pub fn unbound_placeholders(&self) -> Vec<String> {
        self.placeholders()
            .into_iter()
            .filter(|p| {
                let r = ColumnRef::parse(p);
                !self.inputs.iter().any(|i| {
                    i.name == r.name && (r.qualifier.is_none() || i.qualifier == r.qualifier)
                })
            })
            .collect()
    }

    pub fn has_placeholders(&self) -> bool {
        !self.placeholders().is_empty()
    }

    /// Replaces each `{column}` with the rendered value of the matching input.
    pub fn instantiate(&self, values: &[(ColumnRef, Value)]) -> String {
        let mut out = String::with_capacity(self.expression.len());
        let mut rest = self.expression.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            match after.find('}') {
                Some(end) if is_placeholder_name(&after[..end]) => {
                    let r = ColumnRef::parse(&after[..end]);
                    let hit = values.iter().find(|(c, _)| {
                        c.name == r.name && (r.qualifier.is_none() || c.qualifier == r.qualifier)
                    });
                    match hit {
                        Some((_, v)) => out.push_str(&v.render()),
                        None => out.push_str(&rest[start..start + end + 2]),
                    }
                    rest = &after[end + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }

    /// Identity used when UDFs are treated as uninterpreted functions.
    pub fn function_key(&self) -> String {
        if self.expression == self.name && self.model == DEFAULT_MODEL {
            self.name.clone()
        } else {
            format!("{}[{}@{}]", self.name, self.expression, self.model)
        }
    }

    /// Names of the columns produced by a projection UDF.
    pub fn output_fields(&self) -> Vec<(String, TypeTag)> {
        match &self.output {
            OutputKind::Tuple(fields) => fields.clone(),
            _ => Vec::new(),
        }
    }
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
        && !s.starts_with('.')
        && !s.ends_with('.')
}

pub fn placeholders(expression: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = expression;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if is_placeholder_name(&after[..end]) => {
                out.push(after[..end].to_string());
                rest = &after[end + 1..];
            }
            _ => rest = after,
        }
    }
    out
}
