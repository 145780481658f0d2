//! Source-text loading, word normalization, and fixed-window segmentation.
//!
//! A "word" is a maximal non-whitespace run. Each document is cut into
//! fixed-length samples; the first `prefix_len` words of a sample are sent
//! to the model and the remainder is held out as the scoring reference.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: text is empty after normalization")]
    EmptyText { path: String },
    #[error("document {doc_id} has {words} words, shorter than sample_len {sample_len}")]
    DocumentTooShort {
        doc_id: String,
        words: usize,
        sample_len: usize,
    },
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextType {
    Novel,
    News,
    Lyrics,
    Other,
}

impl fmt::Display for TextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TextType::Novel => "novel",
            TextType::News => "news",
            TextType::Lyrics => "lyrics",
            TextType::Other => "other",
        };
        f.write_str(s)
    }
}

/// A normalized source text. `words` is always `normalize(&raw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text_type: TextType,
    pub raw: String,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub sample_len: usize,
    pub prefix_len: usize,
    pub stride: usize,
    pub max_samples: Option<usize>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        // 50-word samples, 20-word prefixes, non-overlapping, 20 per document
        SegmentationConfig {
            sample_len: 50,
            prefix_len: 20,
            stride: 50,
            max_samples: Some(20),
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.prefix_len == 0 || self.prefix_len >= self.sample_len {
            return Err(CorpusError::InvalidConfig(format!(
                "require 0 < prefix_len < sample_len, got prefix_len={} sample_len={}",
                self.prefix_len, self.sample_len
            )));
        }
        if self.stride == 0 {
            return Err(CorpusError::InvalidConfig("stride must be >= 1".into()));
        }
        if self.max_samples == Some(0) {
            return Err(CorpusError::InvalidConfig("max_samples must be positive".into()));
        }
        Ok(())
    }
}

/// One probing unit: `prefix ++ reference` is an exact window of the
/// document's words starting at `start_word`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub doc_id: String,
    pub index: usize,
    pub start_word: usize,
    pub prefix: Vec<String>,
    pub reference: Vec<String>,
}

impl Sample {
    /// The prefix as sent to the model: words joined by single spaces.
    pub fn prefix_text(&self) -> String {
        self.prefix.join(" ")
    }

    pub fn reference_text(&self) -> String {
        self.reference.join(" ")
    }
}

/// Split on any whitespace run; casing and punctuation are preserved inside
/// tokens, and no empty tokens are produced.
pub fn normalize(raw: &str) -> Vec<String> {
    raw.split_whitespace().map(str::to_string).collect()
}

pub fn document_from_text(
    raw: String,
    text_type: TextType,
    title: &str,
    origin: &str,
) -> Result<Document, CorpusError> {
    let words = normalize(&raw);
    if words.is_empty() {
        return Err(CorpusError::EmptyText {
            path: origin.to_string(),
        });
    }
    let mut hasher = Sha256::new();
    hasher.update(title.as_bytes());
    hasher.update([0u8]);
    hasher.update(raw.as_bytes());
    let digest = hasher.finalize();
    let id = format!(
        "{}-{}",
        slugify(title),
        hex::encode(&digest[..6])
    );
    Ok(Document {
        id,
        title: title.to_string(),
        text_type,
        raw,
        words,
    })
}

pub fn load_document(
    path: &Path,
    text_type: TextType,
    title: &str,
) -> Result<Document, CorpusError> {
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    document_from_text(raw, text_type, title, &path.display().to_string())
}

fn slugify(title: &str) -> String {
    let slug: String = title
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect();
    let parts: Vec<&str> = slug.split('-').filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        "untitled".to_string()
    } else {
        parts.join("-")
    }
}

/// Cut a document into samples at offsets 0, stride, 2*stride, ... while a
/// full `sample_len` window fits, truncated to `max_samples` if set.
pub fn segment(doc: &Document, cfg: &SegmentationConfig) -> Result<Vec<Sample>, CorpusError> {
    cfg.validate()?;
    if doc.words.len() < cfg.sample_len {
        return Err(CorpusError::DocumentTooShort {
            doc_id: doc.id.clone(),
            words: doc.words.len(),
            sample_len: cfg.sample_len,
        });
    }
    let mut samples = Vec::new();
    let mut start = 0usize;
    while start + cfg.sample_len <= doc.words.len() {
        if let Some(max) = cfg.max_samples {
            if samples.len() >= max {
                break;
            }
        }
        let window = &doc.words[start..start + cfg.sample_len];
        samples.push(Sample {
            doc_id: doc.id.clone(),
            index: samples.len(),
            start_word: start,
            prefix: window[..cfg.prefix_len].to_vec(),
            reference: window[cfg.prefix_len..].to_vec(),
        });
        start += cfg.stride;
    }
    Ok(samples)
}
