//! Bounded re-prompting when a response fails validation.

use super::{BackendError, DecodeParams, LlmBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3 }
    }
}

/// One failed attempt: the raw response (if any) and why it was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub response: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetryError {
    #[error(transparent)]
    Fatal(BackendError),
    #[error("no valid response after {} attempt(s); last problem: {}", .rejected.len(), .rejected.last().map(|r| r.reason.as_str()).unwrap_or("none"))]
    Exhausted { rejected: Vec<Rejected> },
}

impl RetryError {
    pub fn rejected(&self) -> &[Rejected] {
        match self {
            RetryError::Fatal(_) => &[],
            RetryError::Exhausted { rejected } => rejected,
        }
    }
}

/// Calls the backend until `validate` accepts a response, at most
/// `1 + max_retries` times. Later attempts append the rejection reason to
/// the prompt. Fatal backend errors stop immediately.
pub fn complete_with_retry<T>(
    backend: &dyn LlmBackend,
    prompt: &str,
    params: &DecodeParams,
    policy: RetryPolicy,
    validate: impl Fn(&str) -> Result<T, String>,
) -> Result<T, RetryError> {
    let mut rejected: Vec<Rejected> = Vec::new();
    for _ in 0..=policy.max_retries {
        let text = match rejected.last() {
            None => prompt.to_string(),
            Some(r) => feedback_prompt(prompt, r),
        };
        match backend.complete(&text, params) {
            Ok(c) => match validate(&c.text) {
                Ok(v) => return Ok(v),
                Err(reason) => rejected.push(Rejected { response: Some(c.text), reason }),
            },
            Err(e) if e.is_fatal() => return Err(RetryError::Fatal(e)),
            Err(e) => rejected.push(Rejected { response: None, reason: e.to_string() }),
        }
    }
    Err(RetryError::Exhausted { rejected })
}

fn feedback_prompt(prompt: &str, last: &Rejected) -> String {
    match &last.response {
        Some(resp) => format!(
            "{prompt}\n\nYour previous answer was:\n{resp}\nIt could not be used: {}\nAnswer again in exactly the requested format.",
            last.reason
        ),
        None => prompt.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::backend::MockBackend;

    #[test]
    fn retries_until_valid() {
        let n = AtomicUsize::new(0);
        let m = MockBackend::new(move |_| if n.fetch_add(1, Ordering::SeqCst) < 2 { "maybe".into() } else { "yes".into() });
        let v = complete_with_retry(&m, "q", &DecodeParams::default(), RetryPolicy::default(), |s| {
            if s == "yes" { Ok(true) } else { Err(format!("`{s}` is not yes/no")) }
        })
        .unwrap();
        assert!(v);
        assert_eq!(m.call_count(), 3);
        assert!(m.prompts()[1].contains("`maybe` is not yes/no"));
    }

    #[test]
    fn gives_up_after_max_attempts_with_all_responses() {
        let m = MockBackend::fixed("garbage");
        let err = complete_with_retry(&m, "q", &DecodeParams::default(), RetryPolicy::default(), |_| Err::<(), _>("bad".to_string()))
            .unwrap_err();
        assert_eq!(m.call_count(), 4);
        assert_eq!(err.rejected().len(), 4);
        assert!(err.rejected().iter().all(|r| r.response.as_deref() == Some("garbage")));
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let m = MockBackend::fallible(|_| Err(BackendError::Auth("bad key".into())));
        let err = complete_with_retry(&m, "q", &DecodeParams::default(), RetryPolicy::default(), |_| Ok(())).unwrap_err();
        assert!(matches!(err, RetryError::Fatal(BackendError::Auth(_))));
        assert_eq!(m.call_count(), 1);
    }
}
