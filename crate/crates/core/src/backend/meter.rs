//! Call and token accounting.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use super::{BackendError, Completion, DecodeParams, LlmBackend};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Usage {
    pub calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Some token counts were estimated locally.
    pub estimated: bool,
}

impl Usage {
    pub fn since(&self, earlier: &Usage) -> Usage {
        Usage {
            calls: self.calls - earlier.calls,
            tokens_in: self.tokens_in - earlier.tokens_in,
            tokens_out: self.tokens_out - earlier.tokens_out,
            estimated: self.estimated,
        }
    }
}

/// Counts every call that reaches the inner backend, retries included.
pub struct Metered<B> {
    inner: B,
    calls: AtomicU64,
    tokens_in: AtomicU64,
    tokens_out: AtomicU64,
    estimated: AtomicBool,
}

impl<B: LlmBackend> Metered<B> {
    pub fn new(inner: B) -> Self {
        Metered {
            inner,
            calls: AtomicU64::new(0),
            tokens_in: AtomicU64::new(0),
            tokens_out: AtomicU64::new(0),
            estimated: AtomicBool::new(false),
        }
    }

    pub fn usage(&self) -> Usage {
        Usage {
            calls: self.calls.load(Ordering::SeqCst),
            tokens_in: self.tokens_in.load(Ordering::SeqCst),
            tokens_out: self.tokens_out.load(Ordering::SeqCst),
            estimated: self.estimated.load(Ordering::SeqCst),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: LlmBackend> LlmBackend for Metered<B> {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let c = self.inner.complete(prompt, params)?;
        self.tokens_in.fetch_add(c.tokens_in, Ordering::SeqCst);
        self.tokens_out.fetch_add(c.tokens_out, Ordering::SeqCst);
        if c.estimated {
            self.estimated.store(true, Ordering::SeqCst);
        }
        Ok(c)
    }

    fn supports_concurrency(&self) -> bool {
        self.inner.supports_concurrency()
    }
}
