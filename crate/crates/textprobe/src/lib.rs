//! textprobe measures how much of a source text a language model reproduces
//! when prompted with a partial prefix.
//!
//! Pipeline: texts are normalized into words and segmented into fixed-size
//! samples ([`corpus`]); each sample's prefix is sent to a completion
//! provider ([`provider`]) and the output is scored against the held-out
//! continuation with Rouge-L ([`scoring`]). The [`runner`] batches this over
//! samples, models, and max_tokens sweeps with a resumable result store;
//! [`iterate`] chains completions back in as prompts; [`report`] and
//! [`chart`] aggregate the store into tables and figures.
//!
//! Scoring is generic over the float type; the crate-level aliases pin the
//! pipeline to f64.

pub mod chart;
pub mod config;
pub mod corpus;
pub mod iterate;
pub mod provider;
pub mod report;
pub mod runner;
pub mod scoring;
pub mod store;

/// Scalar type used by the pipeline.
pub type Score = f64;
pub type RougeConfig = scoring::RougeConfig<Score>;
pub type ScoreRecord = scoring::ScoreRecord<Score>;
