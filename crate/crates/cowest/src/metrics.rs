//! Deterministic task metrics over normalized answers: exact match,
//! bag-of-tokens F1, accuracy, and macro-averaged F1.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::collab::extract_final_answer;
use crate::dataset::{Example, TaskKind};
use crate::normalize::normalize_answer;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("prediction and gold lists differ in length: {preds} vs {golds}")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("gold label '{label}' is not in the label set")]
    UnknownLabel { label: String },
    #[error("nothing to score")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One scored metric over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub n: u64,
    /// Per-label breakdown; present exactly for macro-averaged F1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<BTreeMap<String, ClassScores>>,
    pub value: f64,
}

/// 1 iff the normalized strings agree.
pub fn exact_match(pred: &str, gold: &str) -> bool {
    normalize_answer(pred) == normalize_answer(gold)
}

fn token_counts(text: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for token in normalize_answer(text).split_whitespace() {
        *counts.entry(token.to_string()).or_insert(0) += 1;
    }
    counts
}

/// Bag-of-tokens F1 with multiplicity over normalized tokens. Two empty
/// bags count as full agreement; exactly one empty bag scores zero.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let pred_counts = token_counts(pred);
    let gold_counts = token_counts(gold);
    let pred_len: usize = pred_counts.values().sum();
    let gold_len: usize = gold_counts.values().sum();
    if pred_len == 0 && gold_len == 0 {
        return 1.0;
    }
    if pred_len == 0 || gold_len == 0 {
        return 0.0;
    }
    let overlap: usize = pred_counts
        .iter()
        .map(|(token, count)| count.min(gold_counts.get(token).unwrap_or(&0)))
        .sum();
    // 2PR/(P+R) reduced to one division: 2·overlap over total tokens.
    2.0 * overlap as f64 / (pred_len + gold_len) as f64
}

/// Fraction of positions where the normalized strings agree.
pub fn accuracy(preds: &[String], golds: &[String]) -> Result<f64, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if preds.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| exact_match(p, g)).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Unweighted mean of per-label F1 over every label in `labels`, including
/// labels never predicted. 0/0 precision or recall counts as 0. Gold values
/// must come from `labels`; predictions may fall outside (they then score
/// as misses for every label).
pub fn macro_f1(
    preds: &[String],
    golds: &[String],
    labels: &[String],
) -> Result<MetricReport, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if preds.is_empty() || labels.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let normalized_labels: Vec<String> = labels.iter().map(|l| normalize_answer(l)).collect();
    for gold in golds {
        if !normalized_labels.contains(&normalize_answer(gold)) {
            return Err(MetricError::UnknownLabel { label: gold.clone() });
        }
    }
    let norm_preds: Vec<String> = preds.iter().map(|p| normalize_answer(p)).collect();
    let norm_golds: Vec<String> = golds.iter().map(|g| normalize_answer(g)).collect();

    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    for (label, norm_label) in labels.iter().zip(&normalized_labels) {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (p, g) in norm_preds.iter().zip(&norm_golds) {
            let pred_hit = p == norm_label;
            let gold_hit = g == norm_label;
            match (pred_hit, gold_hit) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        f1_sum += f1;
        per_class.insert(label.clone(), ClassScores { f1, precision, recall });
    }
    Ok(MetricReport {
        metric: "macro_f1".into(),
        n: preds.len() as u64,
        per_class: Some(per_class),
        value: f1_sum / labels.len() as f64,
    })
}

fn plain_report(metric: &str, n: usize, value: f64) -> MetricReport {
    MetricReport { metric: metric.into(), n: n as u64, per_class: None, value }
}

/// Maps an extracted answer onto a canonical label when it matches either
/// the label itself or the label's full text.
fn to_label(answer: &str, pairs: &[(String, String)]) -> String {
    let norm = normalize_answer(answer);
    for (label, text) in pairs {
        if norm == normalize_answer(label) || norm == normalize_answer(text) {
            return label.clone();
        }
    }
    answer.to_string()
}

/// Scores a finished run: answers are pulled out of the reply texts by the
/// final-answer rule, then measured by the task's metric pair.
pub fn score_run(
    outputs: &[(Example, String)],
    task_kind: TaskKind,
) -> Result<Vec<MetricReport>, MetricError> {
    if outputs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let answers: Vec<String> =
        outputs.iter().map(|(_, text)| extract_final_answer(text)).collect();
    let golds: Vec<String> = outputs.iter().map(|(ex, _)| ex.ground_truth.clone()).collect();

    match task_kind {
        TaskKind::OpenQa => {
            let em = answers.iter().zip(&golds).filter(|(a, g)| exact_match(a, g)).count()
                as f64
                / answers.len() as f64;
            let f1 = answers.iter().zip(&golds).map(|(a, g)| token_f1(a, g)).sum::<f64>()
                / answers.len() as f64;
            Ok(vec![
                plain_report("exact_match", answers.len(), em),
                plain_report("token_f1", answers.len(), f1),
            ])
        }
        TaskKind::MultipleChoice => {
            let labels: BTreeSet<String> = outputs
                .iter()
                .flat_map(|(ex, _)| ex.choices.as_deref().unwrap_or_default())
                .map(|c| c.label.clone())
                .collect();
            let labels: Vec<String> = labels.into_iter().collect();
            let preds: Vec<String> = outputs
                .iter()
                .zip(&answers)
                .map(|((ex, _), answer)| {
                    let pairs: Vec<(String, String)> = ex
                        .choices
                        .as_deref()
                        .unwrap_or_default()
                        .iter()
                        .map(|c| (c.label.clone(), c.text.clone()))
                        .collect();
                    to_label(answer, &pairs)
                })
                .collect();
            let acc = accuracy(&preds, &golds)?;
            Ok(vec![
                plain_report("accuracy", preds.len(), acc),
                macro_f1(&preds, &golds, &labels)?,
            ])
        }
        TaskKind::Classification => {
            let labels: BTreeSet<String> = outputs
                .iter()
                .flat_map(|(ex, _)| ex.label_set.as_deref().unwrap_or_default())
                .cloned()
                .collect();
            let labels: Vec<String> = labels.into_iter().collect();
            let preds: Vec<String> = outputs
                .iter()
                .zip(&answers)
                .map(|((ex, _), answer)| {
                    let pairs: Vec<(String, String)> = ex
                        .label_set
                        .as_deref()
                        .unwrap_or_default()
                        .iter()
                        .map(|l| (l.clone(), l.clone()))
                        .collect();
                    to_label(answer, &pairs)
                })
                .collect();
            let acc = accuracy(&preds, &golds)?;
            Ok(vec![
                plain_report("accuracy", preds.len(), acc),
                macro_f1(&preds, &golds, &labels)?,
            ])
        }
    }
}
