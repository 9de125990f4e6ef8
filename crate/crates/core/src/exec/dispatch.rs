//! Fan-out of independent backend calls within one operator.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::backend::{complete_with_retry, DecodeParams, LlmBackend, RetryError, RetryPolicy};

pub(crate) struct TimedOut;

pub(crate) struct Dispatcher<'a> {
    pub backend: &'a dyn LlmBackend,
    pub parallelism: usize,
    pub policy: RetryPolicy,
    pub deadline: Option<Instant>,
}

impl Dispatcher<'_> {
    fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Runs every prompt with retries; `validate` also gets the prompt index.
    /// Results come back in prompt order whatever order the calls complete in.
    pub fn run<T: Send>(
        &self,
        prompts: &[String],
        params: &DecodeParams,
        validate: &(dyn Fn(usize, &str) -> Result<T, String> + Sync),
    ) -> Result<Vec<Result<T, RetryError>>, TimedOut> {
        let n = prompts.len();
        let workers = if self.backend.supports_concurrency() { self.parallelism.clamp(1, n.max(1)) } else { 1 };
        if workers <= 1 {
            let mut out = Vec::with_capacity(n);
            for (i, p) in prompts.iter().enumerate() {
                if self.expired() {
                    return Err(TimedOut);
                }
                out.push(complete_with_retry(self.backend, p, params, self.policy, |t| validate(i, t)));
            }
            return Ok(out);
        }
        let next = AtomicUsize::new(0);
        let timed_out = AtomicBool::new(false);
        let slots: Mutex<Vec<Option<Result<T, RetryError>>>> = Mutex::new((0..n).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n || timed_out.load(Ordering::SeqCst) {
                        break;
                    }
                    if self.expired() {
                        timed_out.store(true, Ordering::SeqCst);
                        break;
                    }
                    let r = complete_with_retry(self.backend, &prompts[i], params, self.policy, |t| validate(i, t));
                    slots.lock().expect("result slots")[i] = Some(r);
                });
            }
        });
        if timed_out.load(Ordering::SeqCst) {
            return Err(TimedOut);
        }
        Ok(slots.into_inner().expect("result slots").into_iter().map(|r| r.expect("every slot filled")).collect())
    }
}
