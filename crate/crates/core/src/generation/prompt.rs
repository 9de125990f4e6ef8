//! Generation prompt assembly and the shipped exemplars.

use serde::{Deserialize, Serialize};

use crate::catalog::SemanticDataModel;

use super::decompose::Decomposition;

pub const TASK: &str = include_str!("../../assets/generation/task.txt");
pub const INSTRUCTIONS: &str = include_str!("../../assets/generation/instructions.txt");
const EXEMPLARS: &str = include_str!("../../assets/generation/exemplars.yaml");

/// Operator kinds the exemplar set must cover between them.
pub const EXEMPLAR_KINDS: [&str; 5] = ["Select", "Project", "Join", "TopK", "Aggregate"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub query: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ExemplarError {
    #[error("invalid exemplar file: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error("no exemplar uses {0}")]
    MissingKind(&'static str),
}

/// Parses an exemplar list and checks that every operator kind appears.
pub fn parse_exemplars(text: &str) -> Result<Vec<Exemplar>, ExemplarError> {
    let list: Vec<Exemplar> = serde_yaml::from_str(text)?;
    for kind in EXEMPLAR_KINDS {
        let call = format!("{kind}(");
        if !list.iter().any(|e| e.query.contains(&call)) {
            return Err(ExemplarError::MissingKind(kind));
        }
    }
    Ok(list)
}

pub fn default_exemplars() -> Vec<Exemplar> {
    parse_exemplars(EXEMPLARS).expect("built-in exemplars are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationContext {
    pub question: String,
    pub model: SemanticDataModel,
    pub decomposition: Option<Decomposition>,
    pub exemplars: Vec<Exemplar>,
    pub instructions: String,
}

impl GenerationContext {
    pub fn new(question: impl Into<String>, model: SemanticDataModel) -> Self {
        GenerationContext {
            question: question.into(),
            model,
            decomposition: None,
            exemplars: default_exemplars(),
            instructions: INSTRUCTIONS.trim_end().to_string(),
        }
    }
}

/// Sections in order: TASK, DATABASE SCHEMA, QUESTION (with the
/// decomposition when present), INSTRUCTIONS, EXAMPLES.
pub fn assemble_prompt(ctx: &GenerationContext) -> String {
    let mut p = String::new();
    p.push_str("TASK:\n");
    p.push_str(TASK.trim_end());
    p.push_str("\n\nDATABASE SCHEMA:\n");
    p.push_str(ctx.model.describe().trim_end());
    p.push_str("\n\nQUESTION:\n");
    p.push_str(ctx.question.trim());
    if let Some(d) = &ctx.decomposition {
        p.push_str("\n\nOperator plan:\n");
        p.push_str(&d.to_string());
    }
    p.push_str("\n\nINSTRUCTIONS:\n");
    p.push_str(ctx.instructions.trim_end());
    p.push_str("\n\nEXAMPLES:\n");
    for (i, e) in ctx.exemplars.iter().enumerate() {
        if i > 0 {
            p.push('\n');
        }
        p.push_str(&format!("Question: {}\nQuery:\n{}\n", e.question.trim(), e.query.trim()));
    }
    p
}
