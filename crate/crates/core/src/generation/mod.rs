//! Natural-language question to HRA query.
//!
//! The backend sees the filtered data model, an optional operator-level
//! decomposition of the question, instructions and exemplars. Its answer is
//! parsed, validated and dry-run on a sample of the database; any failure is
//! fed back verbatim in the next attempt.

mod decompose;
mod prompt;

#[cfg(test)]
mod tests;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::backend::{BackendError, DecodeParams, LlmBackend, RetryError, RetryPolicy};
use crate::catalog::SemanticDataModel;
use crate::exec::{execute, ExecConfig};
use crate::parser::parse;
use crate::plan::{validate_plan, QueryPlan};
use crate::relation::Database;

pub use decompose::{
    canonical_operator, decompose, decomposition_prompt, is_semantic_operator, parse_decomposition, Decomposition,
    DecompositionStep, QueryIntent, OPERATORS,
};
pub use prompt::{
    assemble_prompt, default_exemplars, parse_exemplars, Exemplar, ExemplarError, GenerationContext, EXEMPLAR_KINDS,
    INSTRUCTIONS, TASK,
};

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    /// Attempts after the first one.
    pub max_retries: u32,
    pub decompose: bool,
    /// Execute candidates on the first `dry_run_rows` rows of each table,
    /// with semantic operators stubbed out.
    pub dry_run: bool,
    pub dry_run_rows: usize,
    pub params: DecodeParams,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions { max_retries: 3, decompose: true, dry_run: true, dry_run_rows: 20, params: DecodeParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Backend,
    Parse,
    Validate,
    DryRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attempt {
    pub attempt: usize,
    pub prompt: String,
    pub response: Option<String>,
    pub query: Option<String>,
    pub stage: Option<FailureStage>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenerationTrace {
    pub question: String,
    pub decomposition: Option<Decomposition>,
    pub notes: Vec<String>,
    pub attempts: Vec<Attempt>,
}

impl GenerationTrace {
    /// One JSON record per attempt, each carrying the question.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.attempts {
            let record = serde_json::json!({
                "question": self.question,
                "attempt": a.attempt,
                "prompt": a.prompt,
                "response": a.response,
                "query": a.query,
                "stage": a.stage,
                "error": a.error,
            });
            out.push_str(&record.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub plan: QueryPlan,
    pub query: String,
    pub trace: GenerationTrace,
}

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("query generation failed after {attempts} attempt(s); last error: {last_error}")]
    Exhausted { attempts: usize, last_error: String, trace: Box<GenerationTrace> },
    #[error("backend failure during query generation: {source}")]
    Backend { source: BackendError, trace: Box<GenerationTrace> },
}

impl GenerationError {
    pub fn trace(&self) -> &GenerationTrace {
        match self {
            GenerationError::Exhausted { trace, .. } | GenerationError::Backend { trace, .. } => trace,
        }
    }
}

/// The query text inside a response: code fences removed and anything
/// before a `Query:` label dropped.
pub fn extract_query(response: &str) -> String {
    let t = crate::text::strip_code_fence(response);
    let t = match t.rfind("Query:") {
        Some(i) => &t[i + "Query:".len()..],
        None => t,
    };
    crate::text::strip_code_fence(t).trim().to_string()
}

fn feedback_prompt(base: &str, response: &str, error: &str) -> String {
    format!(
        "{base}\n\nPREVIOUS ATTEMPT:\n{}\n\nERROR:\n{error}\n\nFix the error and answer with the corrected query only.",
        response.trim()
    )
}

/// Checks one candidate: parse and validate against `model`, then the dry run.
fn check(query: &str, model: &SemanticDataModel, sample: Option<&Database>, backend: &dyn LlmBackend) -> Result<QueryPlan, (FailureStage, String)> {
    let plan = parse(query, model).map_err(|e| (FailureStage::Parse, format!("[{}] {e}", e.code())))?;
    let report = validate_plan(&plan, model);
    if !report.is_valid() {
        return Err((FailureStage::Validate, report.to_string()));
    }
    if let Some(db) = sample {
        let config = ExecConfig { parallelism: 1, stub_llm: true, timeout: None, ..ExecConfig::default() };
        execute(&plan, db, backend, &config).map_err(|e| (FailureStage::DryRun, format!("execution failed: {e}")))?;
    }
    Ok(plan)
}

/// Generates a query for `question`. `db` enables the dry-run check.
pub fn generate_query(
    question: &str,
    model: &SemanticDataModel,
    backend: &dyn LlmBackend,
    db: Option<&Database>,
    options: &GenerationOptions,
) -> Result<Generated, GenerationError> {
    let mut trace = GenerationTrace { question: question.to_string(), ..GenerationTrace::default() };
    let mut ctx = GenerationContext::new(question, model.clone());
    if options.decompose {
        let policy = RetryPolicy { max_retries: options.max_retries };
        match decompose(question, model, backend, &options.params, policy) {
            Ok(d) => ctx.decomposition = Some(d),
            Err(RetryError::Fatal(source)) => return Err(GenerationError::Backend { source, trace: Box::new(trace) }),
            Err(e) => trace.notes.push(format!("decomposition skipped: {e}")),
        }
        trace.decomposition = ctx.decomposition.clone();
    }
    let sample = match (options.dry_run, db) {
        (true, Some(db)) => Some(db.head(options.dry_run_rows)),
        _ => None,
    };
    let base = assemble_prompt(&ctx);
    let mut prompt = base.clone();
    let mut last_error = String::new();
    for attempt in 1..=options.max_retries as usize + 1 {
        let response = match backend.complete(&prompt, &options.params) {
            Ok(c) => c.text,
            Err(e) if e.is_fatal() => {
                trace.attempts.push(Attempt {
                    attempt,
                    prompt,
                    response: None,
                    query: None,
                    stage: Some(FailureStage::Backend),
                    error: Some(e.to_string()),
                });
                return Err(GenerationError::Backend { source: e, trace: Box::new(trace) });
            }
            Err(e) => {
                last_error = e.to_string();
                trace.attempts.push(Attempt {
                    attempt,
                    prompt: prompt.clone(),
                    response: None,
                    query: None,
                    stage: Some(FailureStage::Backend),
                    error: Some(last_error.clone()),
                });
                continue;
            }
        };
        let query = extract_query(&response);
        match check(&query, model, sample.as_ref(), backend) {
            Ok(plan) => {
                trace.attempts.push(Attempt {
                    attempt,
                    prompt,
                    response: Some(response),
                    query: Some(query.clone()),
                    stage: None,
                    error: None,
                });
                return Ok(Generated { plan, query, trace });
            }
            Err((stage, error)) => {
                let next = feedback_prompt(&base, &response, &error);
                trace.attempts.push(Attempt {
                    attempt,
                    prompt,
                    response: Some(response),
                    query: Some(query),
                    stage: Some(stage),
                    error: Some(error.clone()),
                });
                last_error = error;
                prompt = next;
            }
        }
    }
    let attempts = trace.attempts.len();
    Err(GenerationError::Exhausted { attempts, last_error, trace: Box::new(trace) })
}
