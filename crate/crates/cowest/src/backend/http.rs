//! Chat-completions HTTP backend. Speaks the de-facto OpenAI-compatible
//! protocol: POST {base_url}/chat/completions with a JSON body, bearer auth,
//! reply text at choices[0].message.content.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

use super::{BackendError, Completion, GenerationRequest, Message, Speaker, TextBackend};

/// Environment variable holding the bearer token. No header is sent when it
/// is unset, which suits local inference servers.
pub const API_KEY_ENV: &str = "COWEST_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub api_key: Option<String>,
    /// First retry delay; doubles each attempt with ±20% jitter.
    pub backoff: Duration,
    pub base_url: String,
    pub model: String,
    /// Maximum total attempts per request, first try included.
    pub retries: u32,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            api_key: std::env::var(API_KEY_ENV).ok(),
            backoff: Duration::from_millis(500),
            base_url: base_url.into(),
            model: model.into(),
            retries: 5,
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    content: &'a str,
    role: &'static str,
}

#[derive(Serialize)]
struct WireBody<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
    messages: Vec<WireMessage<'a>>,
    model: &'a str,
    seed: u64,
    temperature: f64,
    top_p: f64,
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReplyMessage,
}

#[derive(Deserialize)]
struct WireReplyMessage {
    content: String,
}

fn wire_role(speaker: Speaker) -> &'static str {
    match speaker {
        Speaker::System => "system",
        Speaker::User => "user",
        Speaker::Assistant => "assistant",
    }
}

fn wire_messages(messages: &[Message]) -> Vec<WireMessage<'_>> {
    messages
        .iter()
        .map(|m| WireMessage { content: &m.text, role: wire_role(m.speaker) })
        .collect()
}

pub struct HttpBackend {
    agent: ureq::Agent,
    attempts: AtomicU64,
    calls: AtomicU64,
    config: HttpConfig,
    jitter: Mutex<SplitMix64>,
    url: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_read(Duration::from_secs(300))
            .timeout_write(Duration::from_secs(60))
            .build();
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        Self {
            agent,
            attempts: AtomicU64::new(0),
            calls: AtomicU64::new(0),
            config,
            jitter: Mutex::new(SplitMix64::new(0x6A09_E667_F3BC_C908)),
            url,
        }
    }

    /// Total HTTP attempts including retries; `calls()` counts requests.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }

    fn backoff_delay(&self, attempt: u32) -> Duration {
        let base = self.config.backoff.as_secs_f64() * f64::from(1u32 << attempt.min(16));
        let jitter = 0.8 + 0.4 * self.jitter.lock().unwrap().next_f64();
        Duration::from_secs_f64(base * jitter)
    }

    fn post_once(&self, request: &GenerationRequest) -> Result<String, Retry> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let body = WireBody {
            max_tokens: request.max_new_tokens,
            messages: wire_messages(&request.messages),
            model: &self.config.model,
            seed: request.seed,
            temperature: request.temperature,
            top_p: request.top_p,
        };
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.config.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match call.send_json(&body) {
            Ok(response) => response,
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                return Err(Retry::Yes(format!("http status {code}")));
            }
            Err(ureq::Error::Status(code, _)) => {
                return Err(Retry::No(format!("http status {code}")));
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(Retry::Yes(format!("transport: {t}")));
            }
        };
        let reply: WireReply = response
            .into_json()
            .map_err(|e| Retry::No(format!("unparseable response body: {e}")))?;
        let first = reply
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Retry::No("response has no choices".into()))?;
        Ok(first.message.content)
    }
}

enum Retry {
    Yes(String),
    No(String),
}

impl TextBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let started = Instant::now();
        let attempts = self.config.retries.max(1);
        let mut last_detail = String::new();
        for attempt in 0..attempts {
            match self.post_once(request) {
                Ok(text) => {
                    return Ok(Completion {
                        from_cache: false,
                        latency_ms: started.elapsed().as_millis() as u64,
                        request_digest: request.digest(),
                        text,
                    });
                }
                Err(Retry::No(detail)) => {
                    return Err(BackendError::Unavailable { detail });
                }
                Err(Retry::Yes(detail)) => {
                    last_detail = detail;
                    if attempt + 1 < attempts {
                        std::thread::sleep(self.backoff_delay(attempt));
                    }
                }
            }
        }
        Err(BackendError::Unavailable {
            detail: format!("{last_detail} (after {attempts} attempts)"),
        })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}
