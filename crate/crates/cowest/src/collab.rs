//! Prompt templating and the generation stages: strong-only baseline
//! answers, weak drafting, strong refinement of a draft, and the
//! draft-then-refine inference path with a logged fallback.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Generator, GenerationRequest, Message, RoleTag};
use crate::dataset::{Example, TaskKind};
use crate::records::{write_records, RecordError};

/// System line for every strong-model call that answers from scratch.
pub const STRONG_SYSTEM: &str = "You are an expert problem solver.";

/// Header that introduces the draft inside the refine prompt. The toy
/// backend keys on it to tell refinement apart from baseline answering.
pub(crate) const DRAFT_HEADER: &str = "Draft answer from a domain-specialized assistant:";

const DEFAULT_STRONG_COT: &str = "{query}\n\nThink step by step, then give the final answer on the last line as 'Answer: …'.";
const DEFAULT_WEAK_DRAFT: &str = "{query}\n\nProvide relevant background knowledge and a step-by-step draft answer. End with 'Answer: …'.";
const DEFAULT_REFINE: &str = "{query}\n\nDraft answer from a domain-specialized assistant:\n{draft}\n\nAssess the draft for flaws or gaps, correct them, and give the final answer on the last line as 'Answer: …'.";

/// Placeholder names expansion recognizes; any other `{word}` is literal
/// text and passes through untouched.
const KNOWN_PLACEHOLDERS: [&str; 3] = ["choices", "draft", "query"];

#[derive(Debug, thiserror::Error)]
pub enum CollabError {
    #[error("template '{template}' is missing a binding for {{{placeholder}}}")]
    MissingBinding { placeholder: String, template: String },
    #[error("template '{template}' must contain {{{placeholder}}}")]
    MissingPlaceholder { placeholder: String, template: String },
    #[error("failed to read template file {path}: {source}")]
    TemplateIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage precondition violated: {detail}")]
    StagePrecondition { detail: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A prompt body with `{placeholder}` slots. Expansion is a single pass
/// over the original body, so placeholder-shaped text inside a bound value
/// is never re-expanded.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: String,
    pub required_placeholders: BTreeSet<String>,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(
        name: impl Into<String>,
        text: impl Into<String>,
        required: &[&str],
    ) -> Result<Self, CollabError> {
        let name = name.into();
        let text = text.into();
        for placeholder in required {
            if !text.contains(&format!("{{{placeholder}}}")) {
                return Err(CollabError::MissingPlaceholder {
                    placeholder: (*placeholder).to_string(),
                    template: name,
                });
            }
        }
        Ok(Self {
            name,
            required_placeholders: required.iter().map(|p| p.to_string()).collect(),
            text,
        })
    }

    /// Replaces every known placeholder with its binding. A known
    /// placeholder present in the body but absent from `bindings` is a
    /// loud error, raised before any backend call is made.
    pub fn expand(&self, bindings: &[(&str, &str)]) -> Result<String, CollabError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let known = KNOWN_PLACEHOLDERS.iter().find(|p| {
                tail.len() > p.len() + 1 && tail[1..].starts_with(**p) && tail.as_bytes()[p.len() + 1] == b'}'
            });
            match known {
                Some(placeholder) => {
                    let value = bindings
                        .iter()
                        .find(|(name, _)| name == placeholder)
                        .map(|(_, value)| *value)
                        .ok_or_else(|| CollabError::MissingBinding {
                            placeholder: (*placeholder).to_string(),
                            template: self.name.clone(),
                        })?;
                    out.push_str(value);
                    rest = &tail[placeholder.len() + 2..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// The three stage prompts. Defaults are built in; `load_dir` swaps in
/// custom bodies from plain text files named after each stage.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub refine: PromptTemplate,
    pub strong_cot: PromptTemplate,
    pub weak_draft: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            refine: PromptTemplate::new("refine", DEFAULT_REFINE, &["query", "draft"]).unwrap(),
            strong_cot: PromptTemplate::new("strong_cot", DEFAULT_STRONG_COT, &["query"]).unwrap(),
            weak_draft: PromptTemplate::new("weak_draft", DEFAULT_WEAK_DRAFT, &["query"]).unwrap(),
        }
    }
}

impl TemplateSet {
    /// Reads `strong_cot.txt`, `weak_draft.txt`, and `refine.txt` from a
    /// directory.
    pub fn load_dir(dir: &Path) -> Result<Self, CollabError> {
        let read = |stem: &str| -> Result<String, CollabError> {
            let path = dir.join(format!("{stem}.txt"));
            std::fs::read_to_string(&path).map_err(|source| CollabError::TemplateIo { path, source })
        };
        Ok(Self {
            refine: PromptTemplate::new("refine", read("refine")?, &["query", "draft"])?,
            strong_cot: PromptTemplate::new("strong_cot", read("strong_cot")?, &["query"])?,
            weak_draft: PromptTemplate::new("weak_draft", read("weak_draft")?, &["query"])?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Refined,
    StrongOnly,
    WeakDraft,
}

/// One stage's full model reply for one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutput {
    pub example_id: String,
    /// For weak drafts, which of the K samples this is; refined outputs
    /// inherit the index of the draft they refine. Strong-only is always 0.
    pub sample_index: u32,
    pub stage: Stage,
    pub text: String,
}

/// Sampling knobs forwarded into generation requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub max_new_tokens: Option<u32>,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplerSettings {
    /// Training-time draft sampling defaults.
    fn default() -> Self {
        Self { max_new_tokens: Some(1028), temperature: 1.0, top_p: 0.9 }
    }
}

impl SamplerSettings {
    /// Strong-model calls sample at full temperature with no nucleus cut
    /// and no length cap.
    pub fn strong() -> Self {
        Self { max_new_tokens: None, temperature: 1.0, top_p: 1.0 }
    }

    /// Near-greedy profile for the single inference-time draft, so served
    /// answers stay reproducible run to run.
    pub fn draft_inference() -> Self {
        Self { max_new_tokens: Some(1028), temperature: 0.2, top_p: 0.9 }
    }
}

/// The query text as prompted: multiple-choice examples get their lettered
/// choice list appended so the model can answer by label.
pub fn render_query(example: &Example) -> String {
    match example.task_kind {
        TaskKind::MultipleChoice => {
            let mut out = example.query.clone();
            out.push_str("\n\n");
            let choices = example.choices.as_deref().unwrap_or_default();
            let lines: Vec<String> =
                choices.iter().map(|c| format!("{}) {}", c.label, c.text)).collect();
            out.push_str(&lines.join("\n"));
            out
        }
        _ => example.query.clone(),
    }
}

fn render_choices(example: &Example) -> String {
    let choices = example.choices.as_deref().unwrap_or_default();
    let lines: Vec<String> = choices.iter().map(|c| format!("{}) {}", c.label, c.text)).collect();
    lines.join("\n")
}

fn expand_for(
    template: &PromptTemplate,
    example: &Example,
    draft: Option<&str>,
) -> Result<String, CollabError> {
    let query = render_query(example);
    let choices = render_choices(example);
    let mut bindings = vec![("choices", choices.as_str()), ("query", query.as_str())];
    if let Some(draft) = draft {
        bindings.push(("draft", draft));
    }
    template.expand(&bindings)
}

/// Request for the baseline scenario: the strong model answers the bare
/// query with chain-of-thought prompting.
pub fn strong_only_request(
    templates: &TemplateSet,
    example: &Example,
    seed: u64,
) -> Result<GenerationRequest, CollabError> {
    let sampler = SamplerSettings::strong();
    Ok(GenerationRequest {
        max_new_tokens: sampler.max_new_tokens,
        messages: vec![
            Message::system(STRONG_SYSTEM),
            Message::user(expand_for(&templates.strong_cot, example, None)?),
        ],
        role_tag: RoleTag::Strong,
        sample_index: 0,
        seed,
        temperature: sampler.temperature,
        top_p: sampler.top_p,
    })
}

/// Request for one weak draft out of `k`.
pub fn weak_draft_request(
    templates: &TemplateSet,
    example: &Example,
    sample_index: u32,
    k: u32,
    sampler: SamplerSettings,
    seed: u64,
) -> Result<GenerationRequest, CollabError> {
    if sample_index >= k {
        return Err(CollabError::StagePrecondition {
            detail: format!("sample_index {sample_index} out of range for k = {k}"),
        });
    }
    Ok(GenerationRequest {
        max_new_tokens: sampler.max_new_tokens,
        messages: vec![Message::user(expand_for(&templates.weak_draft, example, None)?)],
        role_tag: RoleTag::Weak,
        sample_index,
        seed,
        temperature: sampler.temperature,
        top_p: sampler.top_p,
    })
}

/// Request that hands a weak draft to the strong model for refinement.
pub fn refine_request(
    templates: &TemplateSet,
    example: &Example,
    draft: &StageOutput,
    seed: u64,
) -> Result<GenerationRequest, CollabError> {
    if draft.stage != Stage::WeakDraft {
        return Err(CollabError::StagePrecondition {
            detail: format!("refine expects a weak draft, got {:?}", draft.stage),
        });
    }
    if draft.example_id != example.id {
        return Err(CollabError::StagePrecondition {
            detail: format!(
                "draft belongs to example '{}', not '{}'",
                draft.example_id, example.id
            ),
        });
    }
    let sampler = SamplerSettings::strong();
    Ok(GenerationRequest {
        max_new_tokens: sampler.max_new_tokens,
        messages: vec![Message::user(expand_for(&templates.refine, example, Some(&draft.text))?)],
        role_tag: RoleTag::Strong,
        sample_index: draft.sample_index,
        seed,
        temperature: sampler.temperature,
        top_p: sampler.top_p,
    })
}

/// One run-log line per executed stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLogEntry {
    pub digest: String,
    pub example_id: String,
    pub fallback: bool,
    pub from_cache: bool,
    pub stage: Stage,
}

/// Thread-safe collector of stage log lines.
#[derive(Debug, Default)]
pub struct RunLogger {
    entries: Mutex<Vec<StageLogEntry>>,
}

impl RunLogger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, entry: StageLogEntry) {
        self.entries.lock().unwrap().push(entry);
    }

    pub fn entries(&self) -> Vec<StageLogEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn fallback_count(&self) -> usize {
        self.entries.lock().unwrap().iter().filter(|e| e.fallback).count()
    }

    pub fn write(&self, path: &Path) -> Result<(), RecordError> {
        write_records(path, &self.entries())
    }
}

fn run_stage(
    gen: &Generator,
    request: &GenerationRequest,
    example: &Example,
    stage: Stage,
    fallback: bool,
    log: &RunLogger,
) -> Result<StageOutput, CollabError> {
    let completion = gen.generate(request)?;
    log.record(StageLogEntry {
        digest: completion.request_digest.clone(),
        example_id: example.id.clone(),
        fallback,
        from_cache: completion.from_cache,
        stage,
    });
    Ok(StageOutput {
        example_id: example.id.clone(),
        sample_index: request.sample_index,
        stage,
        text: completion.text,
    })
}

/// Baseline scenario: one strong-model answer to the bare query.
pub fn strong_only(
    strong: &Generator,
    templates: &TemplateSet,
    example: &Example,
    seed: u64,
    log: &RunLogger,
) -> Result<StageOutput, CollabError> {
    let request = strong_only_request(templates, example, seed)?;
    run_stage(strong, &request, example, Stage::StrongOnly, false, log)
}

/// One weak draft out of `k`, at the given sample index.
pub fn weak_draft(
    weak: &Generator,
    templates: &TemplateSet,
    example: &Example,
    sample_index: u32,
    k: u32,
    sampler: SamplerSettings,
    seed: u64,
    log: &RunLogger,
) -> Result<StageOutput, CollabError> {
    let request = weak_draft_request(templates, example, sample_index, k, sampler, seed)?;
    run_stage(weak, &request, example, Stage::WeakDraft, false, log)
}

/// Strong-model refinement of a weak draft; the output inherits the
/// draft's sample index.
pub fn refine(
    strong: &Generator,
    templates: &TemplateSet,
    example: &Example,
    draft: &StageOutput,
    seed: u64,
    log: &RunLogger,
) -> Result<StageOutput, CollabError> {
    let request = refine_request(templates, example, draft, seed)?;
    run_stage(strong, &request, example, Stage::Refined, false, log)
}

/// Serving path: one near-greedy weak draft, then one refinement. If the
/// weak call fails, falls back to the strong-only baseline and flags the
/// logged entry.
pub fn collab_infer(
    weak: &Generator,
    strong: &Generator,
    templates: &TemplateSet,
    example: &Example,
    seed: u64,
    log: &RunLogger,
) -> Result<StageOutput, CollabError> {
    let draft = weak_draft(
        weak,
        templates,
        example,
        0,
        1,
        SamplerSettings::draft_inference(),
        seed,
        log,
    );
    match draft {
        Ok(draft) => refine(strong, templates, example, &draft, seed, log),
        Err(CollabError::Backend(_)) => {
            let request = strong_only_request(templates, example, seed)?;
            run_stage(strong, &request, example, Stage::StrongOnly, true, log)
        }
        Err(other) => Err(other),
    }
}

/// The scoreable answer inside a reply: the text after the last line that
/// starts with "Answer:", or the whole trimmed reply if no line does.
pub fn extract_final_answer(text: &str) -> String {
    text.lines()
        .rev()
        .find_map(|line| line.trim_start().strip_prefix("Answer:"))
        .map(|rest| rest.trim().to_string())
        .unwrap_or_else(|| text.trim().to_string())
}
