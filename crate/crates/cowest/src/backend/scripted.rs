//! Scripted backend: replies come from a fixture file instead of a model.
//! Every test of the pipeline above the backend layer runs against this.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::records;

use super::{BackendError, Completion, GenerationRequest, Message, TextBackend};

/// One fixture line. Either `digest` or `messages` must be present;
/// `sample_index` defaults to 0 and only applies to message-keyed entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub messages: Option<Vec<Message>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u32>,
    pub text: String,
}

pub struct ScriptedBackend {
    by_digest: HashMap<String, String>,
    by_messages: HashMap<(String, u32), String>,
    calls: AtomicU64,
}

fn messages_key(messages: &[Message], sample_index: u32) -> (String, u32) {
    let canon = serde_json::to_string(messages).expect("message serialization cannot fail");
    (canon, sample_index)
}

impl ScriptedBackend {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let rows: Vec<FixtureRecord> = records::read_records(path).map_err(|e| {
            BackendError::Unavailable { detail: format!("fixture {}: {e}", path.display()) }
        })?;
        Self::from_records(rows).map_err(|(line, detail)| BackendError::Unavailable {
            detail: format!("fixture {} line {line}: {detail}", path.display()),
        })
    }

    /// Builds a fixture from already-parsed records. Errors carry the
    /// 1-based offending record number.
    pub fn from_records(rows: Vec<FixtureRecord>) -> Result<Self, (usize, String)> {
        let mut by_digest = HashMap::new();
        let mut by_messages = HashMap::new();
        for (i, row) in rows.into_iter().enumerate() {
            match (row.digest, row.messages) {
                (Some(digest), _) => {
                    by_digest.insert(digest, row.text);
                }
                (None, Some(messages)) => {
                    by_messages
                        .insert(messages_key(&messages, row.sample_index.unwrap_or(0)), row.text);
                }
                (None, None) => {
                    return Err((i + 1, "record has neither digest nor messages".into()));
                }
            }
        }
        Ok(Self { by_digest, by_messages, calls: AtomicU64::new(0) })
    }

    /// Builds a fixture directly from (request, reply) pairs, keyed by
    /// digest. Test convenience.
    pub fn from_entries(entries: Vec<(GenerationRequest, String)>) -> Self {
        let by_digest =
            entries.into_iter().map(|(req, text)| (req.digest(), text)).collect();
        Self { by_digest, by_messages: HashMap::new(), calls: AtomicU64::new(0) }
    }
}

impl TextBackend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = request.digest();
        let text = self
            .by_digest
            .get(&digest)
            .or_else(|| self.by_messages.get(&messages_key(&request.messages, request.sample_index)))
            .ok_or_else(|| BackendError::FixtureMiss { digest: digest.clone() })?;
        Ok(Completion {
            from_cache: false,
            latency_ms: 0,
            request_digest: digest,
            text: text.clone(),
        })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}
