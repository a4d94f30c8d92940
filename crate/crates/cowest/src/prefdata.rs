//! Preference-pair construction: judge the strong-only baseline, judge K
//! refined weak drafts against it, split samples by score delta, and pair
//! index-aligned positives with negatives into DPO-ready triplets.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{sha256_hex, BackendError, Generator};
use crate::collab::{
    extract_final_answer, refine, render_query, strong_only, weak_draft, weak_draft_request,
    CollabError, RunLogger, SamplerSettings, Stage, TemplateSet,
};
use crate::dataset::{Dataset, Example};
use crate::judge::{judge_output, EvalScore, JudgeError};
use crate::records::{write_records, RecordError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Negative,
    Positive,
}

/// A positive delta means the weak model's contribution beat the baseline;
/// ties go negative.
pub fn classify(delta: i32) -> Polarity {
    if delta > 0 {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// One judged collaborative sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub delta: i32,
    pub draft_text: String,
    pub e_collab: u8,
    pub e_strong: u8,
    pub example_id: String,
    pub polarity: Polarity,
    pub refined_text: String,
    pub sample_index: u32,
}

/// Sub-record carrying the judged scores behind one exported pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletMeta {
    pub example_id: String,
    pub e_strong: u8,
    pub e_collab_chosen: u8,
    pub e_collab_rejected: u8,
    pub chosen_index: u32,
    pub rejected_index: u32,
}

/// One exported preference pair. Field order is the de-facto DPO-trainer
/// file contract: prompt, chosen, rejected, then metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceTriplet {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: TripletMeta,
}

/// Aggregates over one construction run. Examples the run skipped over
/// errors are the gap between `examples_processed` and the dataset size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefStats {
    pub examples_processed: u64,
    pub samples_judged: u64,
    pub dropped_parse_failures: u64,
    pub positive_rate: f64,
    pub triplet_count: u64,
    pub partial: bool,
}

/// One audit line per successful judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeAuditEntry {
    pub coherence: u8,
    pub consistency: u8,
    pub example_id: String,
    pub raw_reply_digest: String,
    pub sample_index: u32,
    pub stage: Stage,
    pub total: u8,
}

/// Everything a construction run produces besides files.
#[derive(Debug, Clone)]
pub struct PrefOutcome {
    pub audit: Vec<JudgeAuditEntry>,
    pub stats: PrefStats,
    pub triplets: Vec<PreferenceTriplet>,
}

/// Inputs for one construction run.
pub struct PrefJob<'a> {
    pub dataset: &'a Dataset,
    pub judge: &'a Generator,
    pub k: u32,
    pub log: &'a RunLogger,
    pub max_in_flight: usize,
    pub sampler: SamplerSettings,
    pub seed: u64,
    pub strong: &'a Generator,
    pub templates: &'a TemplateSet,
    pub weak: &'a Generator,
}

/// Index-aligned pairing: the j-th positive is preferred over the j-th
/// negative, for j up to the smaller count. Both lists must be in
/// sample-index order.
pub fn pair(
    prompt: &str,
    positives: &[SampleRecord],
    negatives: &[SampleRecord],
) -> Vec<PreferenceTriplet> {
    let n = positives.len().min(negatives.len());
    (0..n)
        .map(|j| {
            let pos = &positives[j];
            let neg = &negatives[j];
            debug_assert_eq!(pos.example_id, neg.example_id);
            PreferenceTriplet {
                prompt: prompt.to_string(),
                chosen: pos.draft_text.clone(),
                rejected: neg.draft_text.clone(),
                meta: TripletMeta {
                    example_id: pos.example_id.clone(),
                    e_strong: pos.e_strong,
                    e_collab_chosen: pos.e_collab,
                    e_collab_rejected: neg.e_collab,
                    chosen_index: pos.sample_index,
                    rejected_index: neg.sample_index,
                },
            }
        })
        .collect()
}

enum ExampleResult {
    /// The request budget tripped mid-example; the example's partial work
    /// is discarded and the whole run winds down.
    Budget,
    /// A fatal per-example failure; `dropped` counts judge-parse drops the
    /// example accumulated before failing.
    Skipped { dropped: u64 },
    Done(ExampleData),
}

struct ExampleData {
    audit: Vec<JudgeAuditEntry>,
    dropped: u64,
    positives: u64,
    samples_judged: u64,
    triplets: Vec<PreferenceTriplet>,
}

fn audit_entry(example: &Example, stage: Stage, sample_index: u32, score: &EvalScore) -> JudgeAuditEntry {
    JudgeAuditEntry {
        coherence: score.coherence,
        consistency: score.consistency,
        example_id: example.id.clone(),
        raw_reply_digest: sha256_hex(score.raw_reply.as_bytes()),
        sample_index,
        stage,
        total: score.total,
    }
}

fn is_budget_collab(err: &CollabError) -> bool {
    matches!(err, CollabError::Backend(BackendError::BudgetExceeded))
}

fn process_example(job: &PrefJob, example: &Example) -> ExampleResult {
    let prompt = match weak_draft_request(job.templates, example, 0, job.k, job.sampler, job.seed)
    {
        Ok(req) => req.messages[0].text.clone(),
        Err(_) => return ExampleResult::Skipped { dropped: 0 },
    };
    let query = render_query(example);
    let mut audit = Vec::new();

    let z = match strong_only(job.strong, job.templates, example, job.seed, job.log) {
        Ok(out) => out,
        Err(err) if is_budget_collab(&err) => return ExampleResult::Budget,
        Err(_) => return ExampleResult::Skipped { dropped: 0 },
    };
    let z_answer = extract_final_answer(&z.text);
    let e_strong = match judge_output(job.judge, &query, &z_answer, &example.ground_truth, job.seed)
    {
        Ok(score) => {
            audit.push(audit_entry(example, Stage::StrongOnly, 0, &score));
            score.total
        }
        Err(JudgeError::Backend(BackendError::BudgetExceeded)) => return ExampleResult::Budget,
        Err(JudgeError::Backend(_)) => return ExampleResult::Skipped { dropped: 0 },
        // Without a baseline score no sample can be classified.
        Err(_) => return ExampleResult::Skipped { dropped: 1 },
    };

    let mut samples: Vec<SampleRecord> = Vec::with_capacity(job.k as usize);
    let mut dropped = 0u64;
    for sample_index in 0..job.k {
        let draft = match weak_draft(
            job.weak,
            job.templates,
            example,
            sample_index,
            job.k,
            job.sampler,
            job.seed,
            job.log,
        ) {
            Ok(out) => out,
            Err(err) if is_budget_collab(&err) => return ExampleResult::Budget,
            Err(_) => continue,
        };
        let refined = match refine(job.strong, job.templates, example, &draft, job.seed, job.log) {
            Ok(out) => out,
            Err(err) if is_budget_collab(&err) => return ExampleResult::Budget,
            Err(_) => continue,
        };
        let answer = extract_final_answer(&refined.text);
        match judge_output(job.judge, &query, &answer, &example.ground_truth, job.seed) {
            Ok(score) => {
                audit.push(audit_entry(example, Stage::Refined, sample_index, &score));
                let delta = i32::from(score.total) - i32::from(e_strong);
                samples.push(SampleRecord {
                    delta,
                    draft_text: draft.text,
                    e_collab: score.total,
                    e_strong,
                    example_id: example.id.clone(),
                    polarity: classify(delta),
                    refined_text: refined.text,
                    sample_index,
                });
            }
            Err(JudgeError::Backend(BackendError::BudgetExceeded)) => return ExampleResult::Budget,
            Err(JudgeError::Backend(_)) => continue,
            Err(_) => dropped += 1,
        }
    }

    let positives: Vec<SampleRecord> =
        samples.iter().filter(|s| s.polarity == Polarity::Positive).cloned().collect();
    let negatives: Vec<SampleRecord> =
        samples.iter().filter(|s| s.polarity == Polarity::Negative).cloned().collect();
    let triplets = pair(&prompt, &positives, &negatives);
    ExampleResult::Done(ExampleData {
        audit,
        dropped,
        positives: positives.len() as u64,
        samples_judged: samples.len() as u64,
        triplets,
    })
}

/// Runs the full construction over a dataset. Examples are independent work
/// units handled by up to `max_in_flight` workers; results are folded in
/// dataset order so output is scheduling-independent. A tripped request
/// budget stops the run early and marks the stats partial; any other
/// per-example failure only skips that example.
pub fn build_preferences(job: &PrefJob) -> PrefOutcome {
    let n = job.dataset.examples.len();
    let slots: Vec<Mutex<Option<ExampleResult>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let budget_hit = AtomicBool::new(false);
    let workers = job.max_in_flight.max(1).min(n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if budget_hit.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let result = process_example(job, &job.dataset.examples[i]);
                if matches!(result, ExampleResult::Budget) {
                    budget_hit.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut outcome = PrefOutcome {
        audit: Vec::new(),
        stats: PrefStats {
            examples_processed: 0,
            samples_judged: 0,
            dropped_parse_failures: 0,
            positive_rate: 0.0,
            triplet_count: 0,
            partial: budget_hit.load(Ordering::SeqCst),
        },
        triplets: Vec::new(),
    };
    let mut positives_total = 0u64;
    for slot in slots {
        match slot.into_inner().unwrap() {
            None | Some(ExampleResult::Budget) => {}
            Some(ExampleResult::Skipped { dropped }) => {
                outcome.stats.dropped_parse_failures += dropped;
            }
            Some(ExampleResult::Done(data)) => {
                outcome.stats.examples_processed += 1;
                outcome.stats.samples_judged += data.samples_judged;
                outcome.stats.dropped_parse_failures += data.dropped;
                positives_total += data.positives;
                outcome.audit.extend(data.audit);
                outcome.triplets.extend(data.triplets);
            }
        }
    }
    outcome.stats.triplet_count = outcome.triplets.len() as u64;
    if outcome.stats.samples_judged > 0 {
        outcome.stats.positive_rate = positives_total as f64 / outcome.stats.samples_judged as f64;
    }
    outcome
}

/// Writes triplets one JSON record per line, ordered by
/// (example_id, chosen_index, rejected_index) so reruns are byte-identical.
/// An empty run still writes an empty file.
pub fn export_dpo(triplets: &[PreferenceTriplet], path: &Path) -> Result<(), RecordError> {
    let mut sorted = triplets.to_vec();
    sorted.sort_by(|a, b| {
        a.meta
            .example_id
            .cmp(&b.meta.example_id)
            .then(a.meta.chosen_index.cmp(&b.meta.chosen_index))
            .then(a.meta.rejected_index.cmp(&b.meta.rejected_index))
    });
    write_records(path, &sorted)
}
