//! Recording live responses and replaying them by prompt hash.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, Completion, DecodeParams, LlmBackend};

/// One line of a replay file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub prompt_sha256: String,
    pub response: String,
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Answers from a JSONL file of [`ReplayRecord`]s; unknown prompts fail.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    records: HashMap<String, ReplayRecord>,
}

impl ReplayBackend {
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        ReplayBackend { records: records.into_iter().map(|r| (r.prompt_sha256.clone(), r)).collect() }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut records = Vec::new();
        for (i, line) in f.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: ReplayRecord = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            records.push(r);
        }
        Ok(ReplayBackend::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, prompt: &str, _params: &DecodeParams) -> Result<Completion, BackendError> {
        let h = prompt_hash(prompt);
        let r = self.records.get(&h).ok_or(BackendError::ReplayMiss(h))?;
        Ok(Completion { text: r.response.clone(), tokens_in: r.tokens_in, tokens_out: r.tokens_out, estimated: false })
    }
}

/// Forwards to `inner` and keeps every successful exchange.
pub struct Recording<B> {
    inner: B,
    records: Mutex<Vec<ReplayRecord>>,
}

impl<B: LlmBackend> Recording<B> {
    pub fn new(inner: B) -> Self {
        Recording { inner, records: Mutex::new(Vec::new()) }
    }

    pub fn records(&self) -> Vec<ReplayRecord> {
        self.records.lock().unwrap().clone()
    }

    /// Appends the recorded exchanges to a JSONL file.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        for r in self.records.lock().unwrap().iter() {
            writeln!(f, "{}", serde_json::to_string(r).expect("records serialize"))?;
        }
        Ok(())
    }
}

impl<B: LlmBackend> LlmBackend for Recording<B> {
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<Completion, BackendError> {
        let c = self.inner.complete(prompt, params)?;
        self.records.lock().unwrap().push(ReplayRecord {
            prompt_sha256: prompt_hash(prompt),
            response: c.text.clone(),
            tokens_in: c.tokens_in,
            tokens_out: c.tokens_out,
        });
        Ok(c)
    }

    fn supports_concurrency(&self) -> bool {
        self.inner.supports_concurrency()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;

    #[test]
    fn record_then_replay() {
        let rec = Recording::new(MockBackend::new(|p| format!("echo {p}")));
        let p = DecodeParams::default();
        rec.complete("a", &p).unwrap();
        rec.complete("b", &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        rec.save(&path).unwrap();
        let replay = ReplayBackend::load(&path).unwrap();
        assert_eq!(replay.complete("b", &p).unwrap().text, "echo b");
        assert!(matches!(replay.complete("c", &p), Err(BackendError::ReplayMiss(_))));
    }
}
