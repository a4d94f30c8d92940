//! Text-generation backends behind one trait: scripted fixtures for tests,
//! an HTTP chat-completions client for real models, and a toy softmax-policy
//! backend for the alignment lab. All calls are identified by the SHA-256 of
//! the request's canonical form, which keys the response cache.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod batch;
pub mod cache;
pub mod http;
pub mod scripted;
pub mod toy;

pub use batch::run_batch;
pub use cache::{cached_generate, ResponseCache};
pub use http::HttpBackend;
pub use scripted::ScriptedBackend;
pub use toy::ToyBackend;

/// Which pipeline role a request is issued for. Part of the canonical form,
/// so the same prompt sent to different roles caches separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Weak,
    Strong,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::System, text: text.into() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::Assistant, text: text.into() }
    }
}

/// A single generation call. Fields are declared alphabetically because the
/// canonical form is the compact JSON serialization in declaration order;
/// reordering fields would silently invalidate every existing cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub max_new_tokens: Option<u32>,
    pub messages: Vec<Message>,
    pub role_tag: RoleTag,
    pub sample_index: u32,
    pub seed: u64,
    pub temperature: f64,
    pub top_p: f64,
}

impl GenerationRequest {
    /// Compact JSON with fields in fixed alphabetical order and no
    /// insignificant whitespace; the digest input.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("request serialization cannot fail")
    }

    /// Lowercase hex SHA-256 of the canonical form; 64 characters.
    pub fn digest(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest { detail: "messages is empty".into() });
        }
        if self.messages.last().map(|m| m.speaker) != Some(Speaker::User) {
            return Err(BackendError::InvalidRequest {
                detail: "last message must come from the user".into(),
            });
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(BackendError::InvalidRequest {
                detail: format!("temperature {} out of range", self.temperature),
            });
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest {
                detail: format!("top_p {} outside (0, 1]", self.top_p),
            });
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub from_cache: bool,
    pub latency_ms: u64,
    pub request_digest: String,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {detail}")]
    Unavailable { detail: String },
    #[error("no fixture entry for request {digest}")]
    FixtureMiss { digest: String },
    #[error("request budget exhausted")]
    BudgetExceeded,
    #[error("cache entry {digest} failed its checksum")]
    CacheCorrupt { digest: String },
    #[error("cache io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid request: {detail}")]
    InvalidRequest { detail: String },
    #[error("batch aborted: {detail}")]
    BatchAborted { detail: String },
}

/// One backend per role. Implementations count the calls they actually
/// serve, which is what budget enforcement and the call-accounting checks
/// observe; cache hits never reach the backend.
pub trait TextBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<Completion, BackendError>;

    /// Number of generate calls served so far.
    fn calls(&self) -> u64;
}

/// Shared per-run cap on backend calls. Acquire before each real call;
/// cache hits bypass it so interrupted runs can resume under the same cap.
#[derive(Debug)]
pub struct RequestBudget {
    limit: u64,
    used: AtomicU64,
}

impl RequestBudget {
    pub fn new(limit: u64) -> Self {
        Self { limit, used: AtomicU64::new(0) }
    }

    pub fn try_acquire(&self) -> Result<(), BackendError> {
        let granted = self
            .used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |used| {
                (used < self.limit).then_some(used + 1)
            })
            .is_ok();
        if granted {
            Ok(())
        } else {
            Err(BackendError::BudgetExceeded)
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }
}

/// A backend bundled with its cache and budget; the handle pipeline stages
/// call through. Cloning shares all three.
#[derive(Clone)]
pub struct Generator {
    backend: Arc<dyn TextBackend>,
    budget: Option<Arc<RequestBudget>>,
    cache: Option<Arc<ResponseCache>>,
}

impl Generator {
    pub fn new(backend: Arc<dyn TextBackend>) -> Self {
        Self { backend, budget: None, cache: None }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_budget(mut self, budget: Arc<RequestBudget>) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<Completion, BackendError> {
        cached_generate(
            self.backend.as_ref(),
            self.cache.as_deref(),
            self.budget.as_deref(),
            request,
        )
    }

    pub fn backend_calls(&self) -> u64 {
        self.backend.calls()
    }
}

#[cfg(test)]
pub(crate) fn test_request(role_tag: RoleTag, user_text: &str, sample_index: u32) -> GenerationRequest {
    GenerationRequest {
        max_new_tokens: Some(64),
        messages: vec![Message::user(user_text)],
        role_tag,
        sample_index,
        seed: 7,
        temperature: 1.0,
        top_p: 0.9,
    }
}
