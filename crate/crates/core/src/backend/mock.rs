//! Deterministic rule-based backend for tests and offline runs.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;

use super::{BackendError, Completion, DecodeParams, LlmBackend};

type MatchFn = Arc<dyn Fn(&str) -> bool + Send + Sync>;
type RespondFn = Arc<dyn Fn(&str) -> Result<String, BackendError> + Send + Sync>;

struct Rule {
    matcher: MatchFn,
    respond: RespondFn,
}

/// Answers each prompt with the first matching rule, falling back to a
/// catch-all responder. Every prompt is logged.
pub struct MockBackend {
    rules: Vec<Rule>,
    fallback: RespondFn,
    latency: Option<Duration>,
    concurrent: bool,
    log: Mutex<Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum MockRulesError {
    #[error("invalid mock rules: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid pattern `{pattern}`: {source}")]
    Pattern { pattern: String, source: regex::Error },
}

#[derive(Deserialize)]
struct RulesFile {
    #[serde(default)]
    rules: Vec<RuleSpec>,
    default: String,
}

#[derive(Deserialize)]
struct RuleSpec {
    #[serde(rename = "match")]
    pattern: String,
    response: String,
}

impl MockBackend {
    /// A backend whose catch-all answers with `f(prompt)`.
    pub fn new(f: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        MockBackend {
            rules: Vec::new(),
            fallback: Arc::new(move |p| Ok(f(p))),
            latency: None,
            concurrent: true,
            log: Mutex::new(Vec::new()),
        }
    }

    /// A catch-all that can fail.
    pub fn fallible(f: impl Fn(&str) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        let mut m = MockBackend::new(|_| String::new());
        m.fallback = Arc::new(f);
        m
    }

    pub fn fixed(answer: impl Into<String>) -> Self {
        let answer = answer.into();
        MockBackend::new(move |_| answer.clone())
    }

    /// Adds a rule answering prompts that contain `needle`.
    pub fn when_contains(mut self, needle: impl Into<String>, answer: impl Into<String>) -> Self {
        let needle = needle.into();
        let answer = answer.into();
        self.rules.push(Rule {
            matcher: Arc::new(move |p| p.contains(&needle)),
            respond: Arc::new(move |_| Ok(answer.clone())),
        });
        self
    }

    /// Adds a rule for prompts matching `pattern`; the answer may use `$1`
    /// style capture references.
    pub fn when_regex(mut self, pattern: Regex, template: impl Into<String>) -> Self {
        let template = template.into();
        let re = pattern.clone();
        self.rules.push(Rule {
            matcher: Arc::new(move |p| pattern.is_match(p)),
            respond: Arc::new(move |p| {
                let caps = re.captures(p).expect("matched above");
                let mut out = String::new();
                caps.expand(&template, &mut out);
                Ok(out)
            }),
        });
        self
    }

    pub fn when(
        mut self,
        matcher: impl Fn(&str) -> bool + Send + Sync + 'static,
        respond: impl Fn(&str) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        self.rules.push(Rule { matcher: Arc::new(matcher), respond: Arc::new(respond) });
        self
    }

    /// Sleeps before every answer.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    pub fn sequential_only(mut self) -> Self {
        self.concurrent = false;
        self
    }

    /// Loads `{"rules": [{"match": regex, "response": template}], "default": text}`.
    pub fn from_rules_json(text: &str) -> Result<Self, MockRulesError> {
        let spec: RulesFile = serde_json::from_str(text)?;
        let default = spec.default;
        let mut m = MockBackend::fixed(default);
        for r in spec.rules {
            let re = Regex::new(&r.pattern).map_err(|source| MockRulesError::Pattern { pattern: r.pattern.clone(), source })?;
            m = m.when_regex(re, r.response);
        }
        Ok(m)
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    /// Prompts received so far, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }

    pub fn reset(&self) {
        self.log.lock().unwrap().clear();
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, prompt: &str, _params: &DecodeParams) -> Result<Completion, BackendError> {
        self.log.lock().unwrap().push(prompt.to_string());
        if let Some(d) = self.latency {
            std::thread::sleep(d);
        }
        let respond = self.rules.iter().find(|r| (r.matcher)(prompt)).map(|r| &r.respond).unwrap_or(&self.fallback);
        let text = respond(prompt)?;
        let mut c = Completion::estimated(prompt, text);
        c.estimated = false;
        Ok(c)
    }

    fn supports_concurrency(&self) -> bool {
        self.concurrent
    }
}
