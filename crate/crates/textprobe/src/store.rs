//! Append-only line-delimited result store.
//!
//! One self-describing JSON record per line. Every record carries the hash
//! of the config snapshot that produced it, so stored scores stay auditable
//! and re-scorable.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TextType;
use crate::provider::Completion;
use crate::ScoreRecord;

pub const STORE_FILE: &str = "results.jsonl";
const LOCK_FILE: &str = ".textprobe.lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed store record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("output directory {0} is locked by another run (remove the lock file if stale)")]
    Locked(String),
}

/// One completed probe task: the sample identity, the completion, and its
/// score against the held-out reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub config_hash: String,
    pub doc_id: String,
    pub sample_index: usize,
    pub text_type: TextType,
    pub start_word: usize,
    pub model_id: String,
    pub provider_name: String,
    pub reference_text: String,
    pub completion: Completion,
    pub score: ScoreRecord,
}

/// A task that exhausted its retries; recorded so partial runs stay honest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub config_hash: String,
    pub request_id: String,
    pub doc_id: String,
    pub sample_index: usize,
    pub text_type: TextType,
    pub model_id: String,
    pub provider_name: String,
    pub error: String,
}

/// One step of an iterative-prompting trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub config_hash: String,
    pub trace_id: String,
    pub doc_id: String,
    pub model_id: String,
    pub iteration: usize,
    pub prompt_text: String,
    pub output_text: String,
    pub reference_window: Vec<String>,
    pub cursor_before: usize,
    pub cursor_after: usize,
    pub score: ScoreRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoreRecord {
    Probe(ProbeResult),
    Failure(FailureRecord),
    Iteration(IterationRecord),
}

pub struct StoreWriter {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl StoreWriter {
    pub fn append(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| StoreError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(StoreWriter {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
        })
    }

    /// Serialize one record and flush it, so an interrupted run keeps every
    /// line written so far.
    pub fn write(&mut self, record: &StoreRecord) -> Result<(), StoreError> {
        let io_err = |source| StoreError::Io {
            path: self.path.display().to_string(),
            source,
        };
        let line = serde_json::to_string(record).expect("store record serialization");
        self.writer.write_all(line.as_bytes()).map_err(io_err)?;
        self.writer.write_all(b"\n").map_err(io_err)?;
        self.writer.flush().map_err(io_err)
    }
}

/// Read every record in the store. A missing file reads as empty.
pub fn read_store(path: &Path) -> Result<Vec<StoreRecord>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Exclusive lock on an output directory; released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(StoreError::Locked(dir.display().to_string()))
            }
            Err(source) => Err(StoreError::Io {
                path: path.display().to_string(),
                source,
            }),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
