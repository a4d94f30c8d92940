//! Desk-scale alignment lab. A toy universe fixes, per context, a small
//! response vocabulary, a ground-truth entry, an integer quality score for
//! every entry, and a baseline score that a stand-alone strong answer earns.
//! Policies are per-context softmax distributions over the vocabulary, small
//! enough that every objective and gradient can be checked coordinate by
//! coordinate.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{self, RecordError};

pub mod train;

pub use train::{
    dpo_grad, dpo_loss, fd_check, sft_grad, sft_loss, train_dpo, train_sft, verify_corollary,
    CorollaryReport, DpoTriplet, StepRecord,
};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("invalid universe: {reason}")]
    InvalidUniverse { reason: String },
    #[error("loss increased for {window} consecutive steps (detected at step {step})")]
    DivergenceDetected { step: u32, window: u32 },
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// One context: a query, the candidate responses, and how good each one is.
/// Quality and baseline share the judge's 1..=10 scale; an entry beats the
/// baseline exactly when its quality is strictly greater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyContext {
    pub baseline: u8,
    pub ground_truth: usize,
    pub id: String,
    pub quality: Vec<u8>,
    pub query: String,
    pub vocab: Vec<String>,
}

impl ToyContext {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Indices whose quality strictly beats the baseline.
    pub fn positive_support(&self) -> Vec<usize> {
        (0..self.vocab.len()).filter(|&i| self.quality[i] > self.baseline).collect()
    }

    /// Indices whose quality fails to beat the baseline (ties included).
    pub fn negative_support(&self) -> Vec<usize> {
        (0..self.vocab.len()).filter(|&i| self.quality[i] <= self.baseline).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyUniverse {
    pub contexts: Vec<ToyContext>,
}

impl ToyUniverse {
    pub fn new(contexts: Vec<ToyContext>) -> Result<Self, ToyError> {
        let universe = Self { contexts };
        universe.validate()?;
        Ok(universe)
    }

    pub fn load(path: &Path) -> Result<Self, ToyError> {
        Self::new(records::read_records(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ToyError> {
        records::write_records(path, &self.contexts)?;
        Ok(())
    }

    pub fn context_index(&self, id: &str) -> Option<usize> {
        self.contexts.iter().position(|c| c.id == id)
    }

    /// Structural checks. The substring rules exist because the toy strong
    /// backend and judge locate contexts and drafts by scanning prompt text:
    /// a vocab entry hiding inside the query or inside another entry would
    /// make that scan ambiguous.
    pub fn validate(&self) -> Result<(), ToyError> {
        let fail = |reason: String| Err(ToyError::InvalidUniverse { reason });
        if self.contexts.is_empty() {
            return fail("no contexts".into());
        }
        let mut ids = HashSet::new();
        for ctx in &self.contexts {
            if ctx.id.is_empty() {
                return fail("empty context id".into());
            }
            if !ids.insert(ctx.id.clone()) {
                return fail(format!("duplicate context id {:?}", ctx.id));
            }
            let v = ctx.vocab.len();
            if v < 2 {
                return fail(format!("context {:?}: vocab must have at least 2 entries", ctx.id));
            }
            if ctx.quality.len() != v {
                return fail(format!("context {:?}: quality length differs from vocab", ctx.id));
            }
            if ctx.ground_truth >= v {
                return fail(format!("context {:?}: ground_truth index out of range", ctx.id));
            }
            if !(1..=10).contains(&ctx.baseline) {
                return fail(format!("context {:?}: baseline outside 1..=10", ctx.id));
            }
            if ctx.quality.iter().any(|q| !(1..=10).contains(q)) {
                return fail(format!("context {:?}: quality outside 1..=10", ctx.id));
            }
            if ctx.positive_support().is_empty() {
                return fail(format!("context {:?}: no entry beats the baseline", ctx.id));
            }
            if ctx.negative_support().is_empty() {
                return fail(format!("context {:?}: every entry beats the baseline", ctx.id));
            }
            if ctx.query.is_empty() {
                return fail(format!("context {:?}: empty query", ctx.id));
            }
            for (i, entry) in ctx.vocab.iter().enumerate() {
                if entry.is_empty() {
                    return fail(format!("context {:?}: empty vocab entry", ctx.id));
                }
                if ctx.query.contains(entry.as_str()) {
                    return fail(format!(
                        "context {:?}: vocab entry {entry:?} occurs in the query",
                        ctx.id
                    ));
                }
                for (j, other) in ctx.vocab.iter().enumerate() {
                    if i != j && other.contains(entry.as_str()) {
                        return fail(format!(
                            "context {:?}: vocab entry {entry:?} is a substring of {other:?}",
                            ctx.id
                        ));
                    }
                }
            }
        }
        for a in &self.contexts {
            for b in &self.contexts {
                if a.id != b.id && b.query.contains(a.query.as_str()) {
                    return fail(format!(
                        "query of context {:?} is a substring of the query of {:?}",
                        a.id, b.id
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - log_sum).collect()
}

/// Per-context logits, aligned with the universe's context and vocab order.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    pub logits: Vec<Vec<f64>>,
}

impl ToyPolicy {
    /// All-zero logits: the uniform policy, the lab's untrained starting
    /// point.
    pub fn uniform(universe: &ToyUniverse) -> Self {
        Self { logits: universe.contexts.iter().map(|c| vec![0.0; c.vocab.len()]).collect() }
    }

    pub fn probs(&self, context: usize) -> Vec<f64> {
        softmax(&self.logits[context])
    }

    pub fn log_probs(&self, context: usize) -> Vec<f64> {
        log_softmax(&self.logits[context])
    }

    pub fn prob(&self, context: usize, response: usize) -> f64 {
        self.probs(context)[response]
    }
}

/// Exported form of a trained policy: explicit probabilities next to the
/// vocab they range over.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyExportRecord {
    pub context: String,
    pub probabilities: Vec<f64>,
    pub vocab: Vec<String>,
}

pub fn export_policy(
    path: &Path,
    universe: &ToyUniverse,
    policy: &ToyPolicy,
) -> Result<(), ToyError> {
    let rows: Vec<PolicyExportRecord> = universe
        .contexts
        .iter()
        .enumerate()
        .map(|(i, ctx)| PolicyExportRecord {
            context: ctx.id.clone(),
            probabilities: policy.probs(i),
            vocab: ctx.vocab.clone(),
        })
        .collect();
    records::write_records(path, &rows)?;
    Ok(())
}

/// Loads an exported policy back as logits (log-probabilities), validated
/// against the universe's layout.
pub fn load_policy(path: &Path, universe: &ToyUniverse) -> Result<ToyPolicy, ToyError> {
    let rows: Vec<PolicyExportRecord> = records::read_records(path)?;
    let mut logits: Vec<Option<Vec<f64>>> = vec![None; universe.contexts.len()];
    for row in rows {
        let Some(idx) = universe.context_index(&row.context) else {
            return Err(ToyError::InvalidUniverse {
                reason: format!("policy references unknown context {:?}", row.context),
            });
        };
        let ctx = &universe.contexts[idx];
        if row.vocab != ctx.vocab {
            return Err(ToyError::InvalidUniverse {
                reason: format!("policy vocab for {:?} differs from the universe", row.context),
            });
        }
        let sum: f64 = row.probabilities.iter().sum();
        if row.probabilities.len() != ctx.vocab.len()
            || row.probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite())
            || (sum - 1.0).abs() > 1e-6
        {
            return Err(ToyError::InvalidUniverse {
                reason: format!("policy probabilities for {:?} are not a distribution", row.context),
            });
        }
        logits[idx] = Some(row.probabilities.iter().map(|p| p.ln()).collect());
    }
    let mut out = Vec::with_capacity(logits.len());
    for (i, slot) in logits.into_iter().enumerate() {
        match slot {
            Some(l) => out.push(l),
            None => {
                return Err(ToyError::InvalidUniverse {
                    reason: format!(
                        "policy file has no record for context {:?}",
                        universe.contexts[i].id
                    ),
                })
            }
        }
    }
    Ok(ToyPolicy { logits: out })
}

/// The standard 3-context lab universe used by the examples and tests:
/// six responses per context, half of them at or below the baseline.
pub fn fixture_universe() -> ToyUniverse {
    let contexts = vec![
        ToyContext {
            baseline: 5,
            ground_truth: 2,
            id: "sky".into(),
            quality: vec![8, 7, 9, 3, 5, 2],
            query: "What shade fills the daytime vault overhead?".into(),
            vocab: vec![
                "azure glow".into(),
                "cerulean wash".into(),
                "sapphire field".into(),
                "mud smear".into(),
                "slate haze".into(),
                "void black".into(),
            ],
        },
        ToyContext {
            baseline: 6,
            ground_truth: 0,
            id: "ocean".into(),
            quality: vec![10, 4, 8, 6, 2, 7],
            query: "Name the broad basin that swallows every river.".into(),
            vocab: vec![
                "world ocean".into(),
                "salt puddle".into(),
                "deep main".into(),
                "tide pool".into(),
                "dry basin".into(),
                "open sea".into(),
            ],
        },
        ToyContext {
            baseline: 4,
            ground_truth: 5,
            id: "ember".into(),
            quality: vec![2, 6, 4, 1, 7, 9],
            query: "What remains glowing after the flame settles?".into(),
            vocab: vec![
                "cold soot".into(),
                "warm coal".into(),
                "grey ash".into(),
                "damp wick".into(),
                "live ember".into(),
                "ruby cinder".into(),
            ],
        },
    ];
    ToyUniverse::new(contexts).expect("fixture universe is valid")
}
