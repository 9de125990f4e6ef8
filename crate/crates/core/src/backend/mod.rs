//! LLM backends: a blocking completion interface plus mock, replay,
//! recording, metering and HTTP implementations.

mod http;
mod meter;
mod mock;
mod replay;
mod retry;

use std::sync::Arc;

pub use http::{HttpBackend, HttpConfig};
pub use meter::{Metered, Usage};
pub use mock::{MockBackend, MockRulesError};
pub use replay::{prompt_hash, Recording, ReplayBackend, ReplayRecord};
pub use retry::{complete_with_retry, Rejected, RetryError, RetryPolicy};

use crate::udf::DEFAULT_MODEL;

/// Decoding parameters sent with every request.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { model: DEFAULT_MODEL.to_string(), temperature: 0.0, max_tokens: None }
    }
}

impl DecodeParams {
    pub fn for_model(model: &str) -> Self {
        DecodeParams { model: model.to_string(), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Token counts were estimated locally rather than reported by the backend.
    pub estimated: bool,
}

impl Completion {
    /// A completion with token counts estimated from text length.
    pub fn estimated(prompt: &str, text: impl Into<String>) -> Self {
        let text = text.into();
        Completion { tokens_in: estimate_tokens(prompt), tokens_out: estimate_tokens(&text), text, estimated: true }
    }
}

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("no recorded response for prompt {0}")]
    ReplayMiss(String),
    #[error("{0}")]
    Other(String),
}

impl BackendError {
    /// Errors that retrying cannot fix.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Auth(_) | BackendError::ReplayMiss(_))
    }
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<Completion, BackendError>;

    /// Whether concurrent calls are allowed.
    fn supports_concurrency(&self) -> bool {
        true
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<Completion, BackendError> {
        (**self).complete(prompt, params)
    }

    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<Completion, BackendError> {
        (**self).complete(prompt, params)
    }

    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<Completion, BackendError> {
        (**self).complete(prompt, params)
    }

    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}
