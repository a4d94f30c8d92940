//! Line-delimited record I/O. One JSON object per line, no pretty printing,
//! fields in the order the record struct declares them (our record structs
//! declare fields alphabetically so reruns emit byte-identical files).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {detail}")]
    Malformed { line: usize, detail: String },
}

/// Serializes records to a single string, one JSON object per line.
/// Kept separate from the file writer so callers can compare bytes.
pub fn render_records<T: Serialize>(records: &[T]) -> Result<String, RecordError> {
    let mut out = String::new();
    for (i, record) in records.iter().enumerate() {
        let line = serde_json::to_string(record).map_err(|e| RecordError::Malformed {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), RecordError> {
    let body = render_records(records)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| RecordError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    let mut file = fs::File::create(path).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(body.as_bytes()).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads records back, reporting the 1-based line number of the first
/// malformed line. Blank lines are rejected rather than skipped: a blank
/// line in a record file means something upstream truncated or corrupted it.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordError> {
    let file = fs::File::open(path).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| RecordError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let record = serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
            line: idx + 1,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
