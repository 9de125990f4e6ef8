//! Chat-completions style HTTP backend.

use std::time::Duration;

use serde_json::{json, Value as Json};

use super::{estimate_tokens, BackendError, Completion, DecodeParams, LlmBackend};
use crate::udf::DEFAULT_MODEL;

const SYSTEM_PROMPT: &str = "You are a precise assistant used as a function inside database queries. Answer only in the format the user asks for.";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Full URL of the chat completions endpoint.
    pub url: String,
    pub api_key: Option<String>,
    /// Model used for UDFs that do not name one.
    pub model: String,
    pub timeout: Duration,
}

impl HttpConfig {
    /// Reads `HRA_LLM_URL`, `HRA_LLM_API_KEY` and `HRA_LLM_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var("HRA_LLM_URL").map_err(|_| BackendError::Other("HRA_LLM_URL is not set".into()))?;
        Ok(HttpConfig {
            url,
            api_key: std::env::var("HRA_LLM_API_KEY").ok().filter(|k| !k.is_empty()),
            model: std::env::var("HRA_LLM_MODEL").unwrap_or_else(|_| "gpt-4o-mini".to_string()),
            timeout: Duration::from_secs(120),
        })
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }

    fn model_for(&self, params: &DecodeParams) -> String {
        if params.model == DEFAULT_MODEL {
            self.config.model.clone()
        } else {
            params.model.clone()
        }
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<Completion, BackendError> {
        let mut body = json!({
            "model": self.model_for(params),
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
            "temperature": params.temperature,
        });
        if let Some(m) = params.max_tokens {
            body["max_tokens"] = json!(m);
        }
        let mut req = self.client.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if status == 401 || status == 403 {
            return Err(BackendError::Auth(format!("HTTP {status}: {}", truncate(&text))));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: truncate(&text) });
        }
        parse_chat_response(prompt, &text)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

/// Extracts the first choice and usage; missing usage falls back to an
/// estimate flagged as such.
pub(crate) fn parse_chat_response(prompt: &str, body: &str) -> Result<Completion, BackendError> {
    let v: Json = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?
        .to_string();
    let usage = &v["usage"];
    match (usage["prompt_tokens"].as_u64(), usage["completion_tokens"].as_u64()) {
        (Some(i), Some(o)) => Ok(Completion { text, tokens_in: i, tokens_out: o, estimated: false }),
        _ => Ok(Completion {
            tokens_in: estimate_tokens(prompt),
            tokens_out: estimate_tokens(&text),
            text,
            estimated: true,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_usage_is_estimated() {
        let c = parse_chat_response("12345678", r#"{"choices":[{"message":{"content":"yes"}}]}"#).unwrap();
        assert!(c.estimated);
        assert_eq!((c.tokens_in, c.tokens_out), (2, 1));
        let c = parse_chat_response(
            "p",
            r#"{"choices":[{"message":{"content":"no"}}],"usage":{"prompt_tokens":7,"completion_tokens":1}}"#,
        )
        .unwrap();
        assert!(!c.estimated);
        assert_eq!(c.tokens_in, 7);
    }

    #[test]
    fn malformed_body_is_an_error() {
        assert!(matches!(parse_chat_response("p", "{}"), Err(BackendError::Malformed(_))));
    }
}
