//! Dataset model: examples with a query, a ground truth, and a task kind
//! that decides which metrics apply and how prompts render.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{self, RecordError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    OpenQa,
    MultipleChoice,
    Classification,
}

/// One answer choice of a multiple-choice example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// A single evaluation item. Field order is alphabetical so emitted record
/// files are byte-stable across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Choice>>,
    pub ground_truth: String,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_set: Option<Vec<String>>,
    pub query: String,
    pub task_kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("example {id:?}: {reason}")]
    ConstraintViolation { id: String, reason: String },
}

impl From<RecordError> for DataError {
    fn from(err: RecordError) -> Self {
        match err {
            RecordError::Io { path, source } => DataError::Io { path, source },
            RecordError::Malformed { line, detail } => DataError::MalformedRecord { line, detail },
        }
    }
}

impl Example {
    /// Checks the per-example constraints; the returned string is the
    /// violation reason.
    pub fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        match self.task_kind {
            TaskKind::OpenQa => {}
            TaskKind::MultipleChoice => {
                let choices = self
                    .choices
                    .as_deref()
                    .filter(|c| !c.is_empty())
                    .ok_or("multiple_choice example without choices")?;
                if !choices.iter().any(|c| c.label == self.ground_truth) {
                    return Err(format!(
                        "ground_truth {:?} is not one of the choice labels",
                        self.ground_truth
                    ));
                }
            }
            TaskKind::Classification => {
                let labels = self
                    .label_set
                    .as_deref()
                    .filter(|l| !l.is_empty())
                    .ok_or("classification example without label_set")?;
                if !labels.iter().any(|l| *l == self.ground_truth) {
                    return Err(format!(
                        "ground_truth {:?} is not in label_set",
                        self.ground_truth
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Loads a dataset from a line-delimited record file. The dataset name is
/// the file stem. Ids must be unique and every example must satisfy its
/// task-kind constraints.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let examples: Vec<Example> = records::read_records(path)?;
    let mut seen = HashSet::new();
    for example in &examples {
        example.check().map_err(|reason| DataError::ConstraintViolation {
            id: example.id.clone(),
            reason,
        })?;
        if !seen.insert(example.id.clone()) {
            return Err(DataError::DuplicateId(example.id.clone()));
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset { name, examples })
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    records::write_records(path, &dataset.examples)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn open_qa(id: &str, query: &str, truth: &str) -> Example {
        Example {
            choices: None,
            ground_truth: truth.into(),
            id: id.into(),
            label_set: None,
            query: query.into(),
            task_kind: TaskKind::OpenQa,
        }
    }

    #[test]
    fn load_rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = Dataset {
            name: "d".into(),
            examples: vec![open_qa("e1", "q", "x"), open_qa("e1", "q2", "y")],
        };
        write_dataset(&path, &ds).unwrap();
        match load_dataset(&path).unwrap_err() {
            DataError::DuplicateId(id) => assert_eq!(id, "e1"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_mc_ground_truth_outside_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ex = Example {
            choices: Some(vec![
                Choice { label: "A".into(), text: "one".into() },
                Choice { label: "B".into(), text: "two".into() },
            ]),
            ground_truth: "C".into(),
            id: "m1".into(),
            label_set: None,
            query: "pick".into(),
            task_kind: TaskKind::MultipleChoice,
        };
        write_dataset(&path, &Dataset { name: "d".into(), examples: vec![ex] }).unwrap();
        match load_dataset(&path).unwrap_err() {
            DataError::ConstraintViolation { id, .. } => assert_eq!(id, "m1"),
            other => panic!("expected ConstraintViolation, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_classification_truth_outside_label_set() {
        let ex = Example {
            choices: None,
            ground_truth: "safe".into(),
            id: "c1".into(),
            label_set: Some(vec!["casual".into(), "needs_caution".into()]),
            query: "judge this".into(),
            task_kind: TaskKind::Classification,
        };
        assert!(ex.check().is_err());
    }

    #[test]
    fn malformed_line_is_reported_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, "{\"id\":\"e1\"}\n").unwrap();
        match load_dataset(&path).unwrap_err() {
            DataError::MalformedRecord { line, .. } => assert_eq!(line, 1),
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    fn example_strategy() -> impl Strategy<Value = Example> {
        let ident = "[a-z][a-z0-9_]{0,8}";
        let text = "[ -~]{0,40}";
        (ident.prop_map(String::from), text.prop_map(String::from), text.prop_map(String::from))
            .prop_map(|(id, query, truth)| open_qa(&id, &query, &truth))
    }

    proptest! {
        // Writing then loading reproduces the dataset exactly.
        #[test]
        fn round_trip_preserves_examples(examples in proptest::collection::vec(example_strategy(), 1..12)) {
            let mut unique = Vec::new();
            let mut seen = HashSet::new();
            for (i, mut ex) in examples.into_iter().enumerate() {
                ex.id = format!("{}_{i}", ex.id);
                if seen.insert(ex.id.clone()) {
                    unique.push(ex);
                }
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ds.jsonl");
            let ds = Dataset { name: "ds".into(), examples: unique };
            write_dataset(&path, &ds).unwrap();
            let loaded = load_dataset(&path).unwrap();
            prop_assert_eq!(loaded.examples, ds.examples);
        }
    }
}
