//! Iterative prompting: seed with the opening words of a document, feed each
//! completion back as the next prompt, and score every step against the
//! original text at a running cursor.
//!
//! The per-iteration reference is the document window starting at the cursor
//! with length equal to the generated word count (clamped at document end);
//! the cursor then advances by that count.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Document;
use crate::provider::{CompletionProvider, GenerationParams};
use crate::scoring::rouge_l;
use crate::store::IterationRecord;
use crate::{RougeConfig, ScoreRecord};

#[derive(Debug, Error)]
pub enum IterateError {
    #[error("seed_word_count {seed} must be positive and smaller than the document ({words} words)")]
    BadSeed { seed: usize, words: usize },
    #[error("iterations must be positive")]
    NoIterations,
    #[error(transparent)]
    Provider(#[from] crate::provider::ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSettings {
    pub seed_word_count: usize,
    pub iterations: usize,
    pub params: GenerationParams,
    pub rouge: RougeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Text handed to the model as the {prefix}; for k > 1 this is exactly
    /// iteration k-1's output.
    pub prompt_text: String,
    pub output_text: String,
    pub reference_window: Vec<String>,
    pub cursor_before: usize,
    pub cursor_after: usize,
    pub score: ScoreRecord,
}

/// The completed prefix of a trace plus an error marker when the loop was
/// cut short by a provider failure or an empty completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub trace_id: String,
    pub doc_id: String,
    pub model_id: String,
    pub traces: Vec<IterationTrace>,
    pub error: Option<String>,
}

impl IterationOutcome {
    /// Flatten into store records, grouped by trace_id.
    pub fn to_records(&self, config_hash: &str) -> Vec<IterationRecord> {
        self.traces
            .iter()
            .map(|t| IterationRecord {
                config_hash: config_hash.to_string(),
                trace_id: self.trace_id.clone(),
                doc_id: self.doc_id.clone(),
                model_id: self.model_id.clone(),
                iteration: t.iteration,
                prompt_text: t.prompt_text.clone(),
                output_text: t.output_text.clone(),
                reference_window: t.reference_window.clone(),
                cursor_before: t.cursor_before,
                cursor_after: t.cursor_after,
                score: t.score.clone(),
            })
            .collect()
    }

    /// (iteration, recall) pairs, the series plotted per trace.
    pub fn recall_series(&self) -> Vec<(usize, f64)> {
        self.traces
            .iter()
            .map(|t| (t.iteration, t.score.recall))
            .collect()
    }
}

/// Document window at `cursor`, clamped at the document end.
pub fn align_reference(doc: &Document, cursor: usize, length: usize) -> &[String] {
    let start = cursor.min(doc.words.len());
    let end = (cursor + length).min(doc.words.len());
    &doc.words[start..end]
}

pub fn run_iterative(
    doc: &Document,
    cfg: &IterationSettings,
    provider: &dyn CompletionProvider,
) -> Result<IterationOutcome, IterateError> {
    if cfg.seed_word_count == 0 || cfg.seed_word_count >= doc.words.len() {
        return Err(IterateError::BadSeed {
            seed: cfg.seed_word_count,
            words: doc.words.len(),
        });
    }
    if cfg.iterations == 0 {
        return Err(IterateError::NoIterations);
    }
    cfg.params.validate()?;

    let mut outcome = IterationOutcome {
        trace_id: trace_id(doc, provider.name(), cfg),
        doc_id: doc.id.clone(),
        model_id: cfg.params.model.clone(),
        traces: Vec::new(),
        error: None,
    };
    let mut prompt = doc.words[..cfg.seed_word_count].join(" ");
    let mut cursor = cfg.seed_word_count;

    for iteration in 1..=cfg.iterations {
        if cursor >= doc.words.len() {
            break;
        }
        let completion = match provider.complete(&prompt, &cfg.params) {
            Ok(c) => c,
            Err(e) => {
                outcome.error = Some(e.to_string());
                break;
            }
        };
        let output_words = completion.output_text.split_whitespace().count();
        if output_words == 0 {
            outcome.error = Some(format!("iteration {iteration}: model returned no words"));
            break;
        }
        let window = align_reference(doc, cursor, output_words);
        let cursor_after = cursor + window.len();
        let score = rouge_l(&window.join(" "), &completion.output_text, &cfg.rouge)
            .expect("non-empty reference window");
        outcome.traces.push(IterationTrace {
            iteration,
            prompt_text: prompt.clone(),
            output_text: completion.output_text.clone(),
            reference_window: window.to_vec(),
            cursor_before: cursor,
            cursor_after,
            score,
        });
        prompt = completion.output_text;
        cursor = cursor_after;
    }
    Ok(outcome)
}

fn trace_id(doc: &Document, provider_name: &str, cfg: &IterationSettings) -> String {
    let mut hasher = Sha256::new();
    for part in [
        doc.id.as_str(),
        provider_name,
        &cfg.params.model,
        &cfg.seed_word_count.to_string(),
        &cfg.iterations.to_string(),
        &cfg.params.max_tokens.to_string(),
    ] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(&hasher.finalize()[..8])
}
