//! Rouge-L scoring over word tokens.
//!
//! Recall, precision and F-measure are all derived from the length of the
//! longest common subsequence between a reference and a candidate token list.
//! Recall is the headline metric; a completion whose recall reaches the
//! configured threshold is flagged as high-similarity (near-verbatim).

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("reference text is empty after tokenization")]
    EmptyReference,
}

/// Tokenization and thresholding knobs for Rouge-L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeConfig<F> {
    /// F-measure weight: beta > 1 favors recall, beta < 1 favors precision.
    pub beta: F,
    /// Recall at or above this value flags a completion as high-similarity.
    pub high_similarity_threshold: F,
    pub case_fold: bool,
    pub strip_punctuation: bool,
}

impl<F: Float + FromPrimitive> Default for RougeConfig<F> {
    fn default() -> Self {
        RougeConfig {
            beta: F::one(),
            high_similarity_threshold: F::from_f64(0.85).unwrap(),
            case_fold: true,
            strip_punctuation: true,
        }
    }
}

impl<F: Float> RougeConfig<F> {
    pub fn validate(&self) -> Result<(), String> {
        if self.beta < F::zero() {
            return Err("rouge.beta must be non-negative".into());
        }
        if self.high_similarity_threshold < F::zero() || self.high_similarity_threshold > F::one()
        {
            return Err("rouge.high_similarity_threshold must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// One scored (reference, candidate) pair.
///
/// `m` is the reference token count, `n` the candidate token count.
/// `lcs_len` is the integer LCS length; recall and precision are exact
/// quotients of it, computed after the integer DP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord<F> {
    pub lcs_len: usize,
    pub m: usize,
    pub n: usize,
    pub recall: F,
    pub precision: F,
    pub f_measure: F,
    pub high_similarity: bool,
}

/// Tokenize text for scoring: whitespace split, then optional case folding
/// and stripping of leading/trailing non-alphanumeric characters. Tokens that
/// become empty after stripping are dropped.
pub fn score_tokenize<F: Float>(text: &str, cfg: &RougeConfig<F>) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let tok = if cfg.strip_punctuation {
                raw.trim_matches(|c: char| !c.is_alphanumeric())
            } else {
                raw
            };
            if tok.is_empty() {
                return None;
            }
            Some(if cfg.case_fold {
                tok.to_lowercase()
            } else {
                tok.to_string()
            })
        })
        .collect()
}

/// Length of the longest common subsequence. O(m*n) time, two-row DP so
/// working space is O(min(m, n)).
pub fn lcs_length<T: PartialEq>(x: &[T], y: &[T]) -> usize {
    let (short, long) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for item in long {
        for (j, s) in short.iter().enumerate() {
            cur[j + 1] = if item == s {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Score a candidate against a reference.
///
/// recall = LCS/m, precision = LCS/n (0 when n = 0), and
/// f = (1 + beta^2) * R * P / (R + beta^2 * P), defined as 0 when the
/// denominator is 0.
pub fn rouge_l<F: Float + FromPrimitive>(
    reference_text: &str,
    candidate_text: &str,
    cfg: &RougeConfig<F>,
) -> Result<ScoreRecord<F>, ScoringError> {
    let reference = score_tokenize(reference_text, cfg);
    let candidate = score_tokenize(candidate_text, cfg);
    if reference.is_empty() {
        return Err(ScoringError::EmptyReference);
    }
    Ok(score_tokens(&reference, &candidate, cfg))
}

/// Rouge-L over already-tokenized inputs. The reference must be non-empty.
pub fn score_tokens<F: Float + FromPrimitive>(
    reference: &[String],
    candidate: &[String],
    cfg: &RougeConfig<F>,
) -> ScoreRecord<F> {
    debug_assert!(!reference.is_empty());
    let m = reference.len();
    let n = candidate.len();
    let lcs = lcs_length(reference, candidate);

    let lcs_f = F::from_usize(lcs).unwrap();
    let recall = lcs_f / F::from_usize(m).unwrap();
    let precision = if n > 0 {
        lcs_f / F::from_usize(n).unwrap()
    } else {
        F::zero()
    };
    let beta2 = cfg.beta * cfg.beta;
    let denom = recall + beta2 * precision;
    let f_measure = if denom > F::zero() {
        (F::one() + beta2) * recall * precision / denom
    } else {
        F::zero()
    };
    ScoreRecord {
        lcs_len: lcs,
        m,
        n,
        recall,
        precision,
        f_measure,
        high_similarity: classify_high_similarity(recall, cfg),
    }
}

/// Inclusive threshold: recall >= threshold counts as high-similarity.
pub fn classify_high_similarity<F: Float>(recall: F, cfg: &RougeConfig<F>) -> bool {
    recall >= cfg.high_similarity_threshold
}
