//! Deterministic offline model with tunable recall, used as a ground-truth
//! oracle for the whole pipeline.
//!
//! The model "memorized" a word list. Given a prompt it locates the last
//! occurrence of the prompt's final `context_len` words in that list and
//! walks forward from there, emitting each true next word with probability
//! `fidelity` and a seeded-random vocabulary word otherwise.
//! `divergence_point` caps how far the memory reaches: source words at or
//! beyond that index are never reproduced. An unmatched prompt (or a walk
//! past the end of the source) yields random words only.

use std::collections::BTreeSet;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Completion, CompletionProvider, FinishReason, GenerationParams, ProviderError};

#[derive(Debug, Clone)]
pub struct MemorizerModel {
    name: String,
    source_words: Vec<String>,
    vocab: Vec<String>,
    context_len: usize,
    fidelity: f64,
    divergence_point: Option<usize>,
    rng_seed: u64,
}

impl MemorizerModel {
    pub fn new(
        name: impl Into<String>,
        source_words: Vec<String>,
        context_len: usize,
        fidelity: f64,
        divergence_point: Option<usize>,
        rng_seed: u64,
    ) -> Self {
        assert!((0.0..=1.0).contains(&fidelity), "fidelity must be in [0, 1]");
        assert!(context_len >= 1, "context_len must be positive");
        let vocab: Vec<String> = source_words
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        MemorizerModel {
            name: name.into(),
            source_words,
            vocab,
            context_len,
            fidelity,
            divergence_point,
            rng_seed,
        }
    }

    pub fn perfect(name: impl Into<String>, source_words: Vec<String>, rng_seed: u64) -> Self {
        Self::new(name, source_words, 8, 1.0, None, rng_seed)
    }

    /// Index just past the last occurrence of the prompt's trailing context
    /// window, or None when the context never appears in the source.
    fn match_end(&self, prefix_words: &[&str]) -> Option<usize> {
        if prefix_words.is_empty() || self.source_words.len() < self.context_len {
            return None;
        }
        let ctx_len = self.context_len.min(prefix_words.len());
        let context = &prefix_words[prefix_words.len() - ctx_len..];
        (0..=self.source_words.len() - ctx_len)
            .rev()
            .find(|&i| {
                self.source_words[i..i + ctx_len]
                    .iter()
                    .zip(context.iter())
                    .all(|(a, b)| a == b)
            })
            .map(|i| i + ctx_len)
    }

    /// Continue `prefix_text` by up to `max_tokens` words. Total and
    /// deterministic: the RNG is re-seeded from (rng_seed, prefix_text).
    pub fn complete_text(&self, prefix_text: &str, max_tokens: u32) -> String {
        let prefix_words: Vec<&str> = prefix_text.split_whitespace().collect();
        let matched = self.match_end(&prefix_words);

        let mut hasher = Sha256::new();
        hasher.update(prefix_text.as_bytes());
        let digest = hasher.finalize();
        let call_seed = self.rng_seed ^ u64::from_le_bytes(digest[..8].try_into().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(call_seed);

        let mut out: Vec<&str> = Vec::with_capacity(max_tokens as usize);
        for i in 0..max_tokens as usize {
            let truth = matched.and_then(|p| {
                let idx = p + i;
                if self.divergence_point.is_some_and(|d| idx >= d) {
                    None
                } else {
                    self.source_words.get(idx)
                }
            });
            let roll: f64 = rng.gen();
            match truth {
                Some(word) if roll < self.fidelity => out.push(word),
                _ => {
                    if self.vocab.is_empty() {
                        break;
                    }
                    out.push(&self.vocab[rng.gen_range(0..self.vocab.len())]);
                }
            }
        }
        out.join(" ")
    }
}

impl CompletionProvider for MemorizerModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(
        &self,
        prefix_text: &str,
        params: &GenerationParams,
    ) -> Result<Completion, ProviderError> {
        params.validate()?;
        let prompt_text = params.render_prompt(prefix_text);
        let output_text = self.complete_text(prefix_text, params.max_tokens);
        Ok(Completion {
            request_id: super::request_id(&self.name, params, &prompt_text),
            params: params.clone(),
            prompt_text,
            output_text,
            provider_name: self.name.clone(),
            latency_ms: 0,
            finish_reason: FinishReason::Length,
            // fixed timestamp keeps memorizer-only runs byte-reproducible
            timestamp: Utc.timestamp_opt(0, 0).unwrap(),
        })
    }
}
