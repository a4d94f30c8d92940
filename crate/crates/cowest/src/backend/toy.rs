//! Deterministic in-process backend over a toy response universe. The weak
//! role samples vocab entries from a categorical policy, the strong role
//! either answers at the context's fixed baseline level or echoes the
//! draft's entry through refinement, and the judge role grades by the
//! universe's quality table. Together they let the full preference pipeline
//! run at desk scale with exactly reproducible outputs.

use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::backend::{BackendError, Completion, GenerationRequest, RoleTag, Speaker, TextBackend};
use crate::collab::DRAFT_HEADER;
use crate::dataset::{Example, TaskKind};
use crate::judge::{CANDIDATE_MARKER, GROUND_TRUTH_MARKER};
use crate::rng::SplitMix64;
use crate::toyalign::{softmax, train::check_shape, ToyError, ToyPolicy, ToyUniverse};

/// What the toy strong model answers when no draft helps it: scored at the
/// context's baseline because it matches no vocab entry.
pub const BASELINE_ANSWER: &str = "the stock textbook response";

pub struct ToyBackend {
    calls: AtomicU64,
    policy: ToyPolicy,
    universe: ToyUniverse,
}

impl ToyBackend {
    pub fn new(universe: ToyUniverse, policy: ToyPolicy) -> Result<Self, ToyError> {
        check_shape(&policy, &universe, "toy backend")?;
        for ctx in &universe.contexts {
            if let Some(entry) = ctx.vocab.iter().find(|v| BASELINE_ANSWER.contains(v.as_str())) {
                return Err(ToyError::InvalidUniverse {
                    reason: format!(
                        "vocab entry '{entry}' in context '{}' collides with the baseline answer",
                        ctx.id
                    ),
                });
            }
        }
        Ok(Self { calls: AtomicU64::new(0), policy, universe })
    }

    /// Exactly one context's query must appear in the prompt; universe
    /// validation keeps queries from containing each other.
    fn resolve_context(&self, prompt: &str) -> Result<usize, BackendError> {
        let mut found = None;
        for (i, ctx) in self.universe.contexts.iter().enumerate() {
            if prompt.contains(&ctx.query) {
                if found.is_some() {
                    return Err(BackendError::InvalidRequest {
                        detail: "toy backend: prompt matches more than one context".into(),
                    });
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| BackendError::InvalidRequest {
            detail: "toy backend: prompt matches no context query".into(),
        })
    }

    fn weak_reply(&self, request: &GenerationRequest, prompt: &str) -> Result<String, BackendError> {
        let ctx_index = self.resolve_context(prompt)?;
        let logits = &self.policy.logits[ctx_index];
        let index = if request.temperature == 0.0 {
            argmax(logits)
        } else {
            let scaled: Vec<f64> = logits.iter().map(|l| l / request.temperature).collect();
            let probs = softmax(&scaled);
            // Per-draw stream: one request, one draw, reproducible in
            // isolation. Folding in the message hash decorrelates contexts
            // that share a seed and sample index.
            let mut rng =
                SplitMix64::new(request.seed ^ u64::from(request.sample_index) ^ message_seed(request));
            sample_index(&probs, rng.next_f64())
        };
        let entry = &self.universe.contexts[ctx_index].vocab[index];
        Ok(format!("The specialty notes settle it.\nAnswer: {entry}"))
    }

    fn strong_reply(&self, prompt: &str) -> Result<String, BackendError> {
        let ctx_index = self.resolve_context(prompt)?;
        if prompt.contains(DRAFT_HEADER) {
            // Refinement echoes the draft's entry: the strong model cannot
            // improve on specialist knowledge, only pass it through.
            let vocab = &self.universe.contexts[ctx_index].vocab;
            let best = vocab
                .iter()
                .filter(|entry| prompt.contains(entry.as_str()))
                .max_by_key(|entry| entry.len());
            if let Some(entry) = best {
                return Ok(format!("The draft's conclusion survives scrutiny.\nAnswer: {entry}"));
            }
            return Ok(format!(
                "The draft offers nothing usable; answering from general knowledge.\nAnswer: {BASELINE_ANSWER}"
            ));
        }
        Ok(format!("Working from general knowledge alone.\nAnswer: {BASELINE_ANSWER}"))
    }

    fn judge_reply(&self, prompt: &str) -> Result<String, BackendError> {
        let ctx_index = self.resolve_context(prompt)?;
        let candidate = prompt
            .find(CANDIDATE_MARKER)
            .map(|at| &prompt[at + CANDIDATE_MARKER.len()..])
            .and_then(|rest| rest.find(GROUND_TRUTH_MARKER).map(|end| rest[..end].trim()))
            .ok_or_else(|| BackendError::InvalidRequest {
                detail: "toy backend: judge prompt lacks the candidate section".into(),
            })?;
        let ctx = &self.universe.contexts[ctx_index];
        let score = ctx
            .vocab
            .iter()
            .position(|v| v == candidate)
            .map(|i| ctx.quality[i])
            .unwrap_or(ctx.baseline);
        Ok(format!("Coherence: {score}\nConsistency: {score}\nScore: {score}"))
    }
}

impl TextBackend for ToyBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request
            .messages
            .iter()
            .rev()
            .find(|m| m.speaker == Speaker::User)
            .map(|m| m.text.as_str())
            .ok_or_else(|| BackendError::InvalidRequest {
                detail: "toy backend: request has no user message".into(),
            })?;
        let text = match request.role_tag {
            RoleTag::Judge => self.judge_reply(prompt)?,
            RoleTag::Strong => self.strong_reply(prompt)?,
            RoleTag::Weak => self.weak_reply(request, prompt)?,
        };
        Ok(Completion {
            from_cache: false,
            latency_ms: 0,
            request_digest: request.digest(),
            text,
        })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn sample_index(probs: &[f64], r: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if r < cumulative {
            return i;
        }
    }
    probs.len() - 1
}

/// First eight bytes (big-endian) of the SHA-256 of the canonical messages
/// JSON, mixed into the sampling seed.
fn message_seed(request: &GenerationRequest) -> u64 {
    let json = serde_json::to_string(&request.messages).expect("messages serialize");
    let digest = Sha256::digest(json.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

/// The universe's contexts as an open-QA dataset: the ground truth is the
/// designated vocab entry.
pub fn toy_examples(universe: &ToyUniverse) -> Vec<Example> {
    universe
        .contexts
        .iter()
        .map(|ctx| Example {
            choices: None,
            ground_truth: ctx.vocab[ctx.ground_truth].clone(),
            id: ctx.id.clone(),
            label_set: None,
            query: ctx.query.clone(),
            task_kind: TaskKind::OpenQa,
        })
        .collect()
}
