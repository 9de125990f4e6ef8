//! Operator-level decomposition of a question.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::{complete_with_retry, DecodeParams, LlmBackend, RetryError, RetryPolicy};
use crate::catalog::SemanticDataModel;
use crate::exec::templates::render;

const PROMPT: &str = include_str!("../../assets/generation/decompose.txt");

/// Operator names a step may use, with whether they call the model.
pub const OPERATORS: &[(&str, bool)] = &[
    ("Scan", false),
    ("Select", false),
    ("Project", false),
    ("Join", false),
    ("TopK", false),
    ("Aggregate", false),
    ("Semantic Select", true),
    ("Semantic Project", true),
    ("Semantic Join", true),
    ("Semantic TopK", true),
    ("Semantic Aggregate", true),
];

/// Canonical operator name for `name`, accepting common variants such as
/// "Semantic Projection" or "selection".
pub fn canonical_operator(name: &str) -> Option<&'static str> {
    let norm: String = name.trim().to_ascii_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    let norm = norm
        .replace("projection", "project")
        .replace("selection", "select")
        .replace("aggregation", "aggregate")
        .replace("top-k", "topk")
        .replace("top k", "topk");
    OPERATORS.iter().map(|(n, _)| *n).find(|n| n.to_ascii_lowercase() == norm)
}

pub fn is_semantic_operator(name: &str) -> bool {
    OPERATORS.iter().any(|(n, s)| *n == name && *s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryIntent {
    Aggregation,
    Filtering,
    Ranking,
    Existence,
}

impl fmt::Display for QueryIntent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryIntent::Aggregation => "aggregation",
            QueryIntent::Filtering => "filtering",
            QueryIntent::Ranking => "ranking",
            QueryIntent::Existence => "existence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionStep {
    pub index: usize,
    pub operator: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
}

impl DecompositionStep {
    pub fn is_semantic(&self) -> bool {
        is_semantic_operator(&self.operator)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub steps: Vec<DecompositionStep>,
    pub intent: QueryIntent,
}

impl fmt::Display for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{}. {}: {}", s.index, s.operator, s.description)?;
            if let Some(j) = &s.justification {
                writeln!(f, "   Justification: {j}")?;
            }
        }
        write!(f, "INTENT: {}", self.intent)
    }
}

/// Parses the numbered-step format. Steps must be numbered from 1 without
/// gaps, name a known operator, carry a justification when semantic, and be
/// followed by an `INTENT:` line.
pub fn parse_decomposition(text: &str) -> Result<Decomposition, String> {
    let text = crate::text::strip_code_fence(text);
    let mut steps: Vec<DecompositionStep> = Vec::new();
    let mut intent = None;
    for line in text.lines() {
        let l = line.trim().trim_start_matches(['-', '*']).trim();
        if l.is_empty() || intent.is_some() {
            continue;
        }
        if let Some(rest) = strip_label(l, "intent:") {
            let rest = rest.trim().trim_matches(|c: char| !c.is_ascii_alphabetic()).to_ascii_lowercase();
            intent = Some(match rest.as_str() {
                "aggregation" => QueryIntent::Aggregation,
                "filtering" => QueryIntent::Filtering,
                "ranking" => QueryIntent::Ranking,
                "existence" => QueryIntent::Existence,
                other => return Err(format!("unknown intent `{other}`")),
            });
            continue;
        }
        if let Some(rest) = strip_label(l, "justification:") {
            let step = steps.last_mut().ok_or("justification before the first step")?;
            step.justification = Some(rest.trim().to_string()).filter(|s| !s.is_empty());
            continue;
        }
        let Some((num, rest)) = l.split_once('.') else { continue };
        let Ok(index) = num.trim().parse::<usize>() else { continue };
        if index != steps.len() + 1 {
            return Err(format!("step {index} is out of order; expected step {}", steps.len() + 1));
        }
        let (op, desc) = rest.split_once(':').ok_or_else(|| format!("step {index} is not `<Operator>: <parameters>`"))?;
        let operator = canonical_operator(op).ok_or_else(|| format!("step {index} uses unknown operator `{}`", op.trim()))?;
        steps.push(DecompositionStep {
            index,
            operator: operator.to_string(),
            description: desc.trim().to_string(),
            justification: None,
        });
    }
    if steps.is_empty() {
        return Err("no numbered steps found".into());
    }
    if let Some(s) = steps.iter().find(|s| s.is_semantic() && s.justification.is_none()) {
        return Err(format!("semantic step {} ({}) has no justification", s.index, s.operator));
    }
    let intent = intent.ok_or("missing `INTENT:` line")?;
    Ok(Decomposition { steps, intent })
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    (line.len() >= label.len() && line[..label.len()].eq_ignore_ascii_case(label)).then(|| &line[label.len()..])
}

pub fn decomposition_prompt(question: &str, model: &SemanticDataModel) -> String {
    render(PROMPT.trim_end(), &[("schema", model.describe().trim_end()), ("question", question)])
}

pub fn decompose(
    question: &str,
    model: &SemanticDataModel,
    backend: &dyn LlmBackend,
    params: &DecodeParams,
    policy: RetryPolicy,
) -> Result<Decomposition, RetryError> {
    complete_with_retry(backend, &decomposition_prompt(question, model), params, policy, parse_decomposition)
}
