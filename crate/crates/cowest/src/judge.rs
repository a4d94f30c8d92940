//! Rubric grading of candidate answers by a judge backend, with strict
//! parsing of the three-line score reply.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Generator, GenerationRequest, Message, RoleTag};

/// System line for every judge call.
pub const JUDGE_SYSTEM: &str = "You are a strict grader.";

/// Appended as a fresh user turn when the judge's reply fails to parse.
pub const REPROMPT_INSTRUCTION: &str = "Reply ONLY in the required format.";

/// Total parse attempts per judgment: the first ask plus two re-prompts.
const PARSE_ATTEMPTS: u32 = 3;

/// Section markers inside the judge prompt. The table-driven toy judge
/// recovers the candidate text by slicing between them.
pub(crate) const CANDIDATE_MARKER: &str = "Candidate answer:\n";
pub(crate) const GROUND_TRUTH_MARKER: &str = "\n\nGround truth:\n";

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("candidate text is empty; nothing to grade")]
    EmptyCandidate,
    #[error("judge reply has no parseable '{field}: <int>' line")]
    MissingField { field: &'static str },
    #[error("judge reply's {field} value {value} is outside 1..=10")]
    OutOfRange { field: &'static str, value: i64 },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One graded output. `total` is the judge's own overall score, never
/// recomputed from the sub-scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalScore {
    pub coherence: u8,
    pub consistency: u8,
    pub raw_reply: String,
    pub total: u8,
}

/// The full judge conversation opener for one candidate.
pub fn build_judge_messages(query: &str, candidate: &str, ground_truth: &str) -> Vec<Message> {
    let user = format!(
        "Query:\n{query}\n\n{CANDIDATE_MARKER}{candidate}{GROUND_TRUTH_MARKER}{ground_truth}\n\n\
         Grade the candidate answer on two criteria, each an integer from 1 to 10:\n\
         - Coherence of reasoning logic\n\
         - Consistency with ground truth\n\n\
         Then give an overall score, an integer from 1 to 10. Reply in exactly this format:\n\
         Coherence: <int>\n\
         Consistency: <int>\n\
         Score: <int>"
    );
    vec![Message::system(JUDGE_SYSTEM), Message::user(user)]
}

/// Request wrapper for a judge conversation: temperature 0 so grading is as
/// repeatable as the backend allows.
pub fn judge_request(messages: Vec<Message>, seed: u64) -> GenerationRequest {
    GenerationRequest {
        max_new_tokens: None,
        messages,
        role_tag: RoleTag::Judge,
        sample_index: 0,
        seed,
        temperature: 0.0,
        top_p: 1.0,
    }
}

/// Last line of the form "{field}: <integer>", if any.
fn last_int(text: &str, field: &'static str) -> Option<i64> {
    let prefix = format!("{field}:");
    text.lines().rev().find_map(|line| {
        line.trim_start()
            .strip_prefix(prefix.as_str())
            .and_then(|rest| rest.trim().parse::<i64>().ok())
    })
}

/// Extracts (coherence, consistency, total) from a judge reply. Each field
/// takes its last matching line; all three are required; values must lie in
/// 1..=10. An out-of-range value is reported in preference to a missing
/// field, since it proves the reply was parseable but invalid.
pub fn parse_judge_reply(text: &str) -> Result<(u8, u8, u8), JudgeError> {
    let fields: [(&'static str, Option<i64>); 3] = [
        ("Coherence", last_int(text, "Coherence")),
        ("Consistency", last_int(text, "Consistency")),
        ("Score", last_int(text, "Score")),
    ];
    for (field, value) in &fields {
        if let Some(value) = *value {
            if !(1..=10).contains(&value) {
                return Err(JudgeError::OutOfRange { field, value });
            }
        }
    }
    let mut picked = [0u8; 3];
    for (slot, (field, value)) in picked.iter_mut().zip(&fields) {
        match value {
            Some(value) => *slot = *value as u8,
            None => return Err(JudgeError::MissingField { field }),
        }
    }
    Ok((picked[0], picked[1], picked[2]))
}

/// Grades one candidate against the ground truth. On a malformed reply the
/// conversation is extended with the reply and a format reminder, up to two
/// re-prompts; after that the last parse error surfaces and the caller
/// drops the sample.
pub fn judge_output(
    judge: &Generator,
    query: &str,
    candidate: &str,
    ground_truth: &str,
    seed: u64,
) -> Result<EvalScore, JudgeError> {
    if candidate.trim().is_empty() {
        return Err(JudgeError::EmptyCandidate);
    }
    let mut messages = build_judge_messages(query, candidate, ground_truth);
    let mut last_err = JudgeError::MissingField { field: "Score" };
    for _ in 0..PARSE_ATTEMPTS {
        let completion = judge.generate(&judge_request(messages.clone(), seed))?;
        match parse_judge_reply(&completion.text) {
            Ok((coherence, consistency, total)) => {
                return Ok(EvalScore { coherence, consistency, raw_reply: completion.text, total });
            }
            Err(err) => {
                messages.push(Message::assistant(completion.text));
                messages.push(Message::user(REPROMPT_INSTRUCTION));
                last_err = err;
            }
        }
    }
    Err(last_err)
}
