//! Completion providers: a uniform interface over OpenAI-compatible HTTP
//! endpoints and the deterministic offline memorizer.

mod http;
mod memorizer;
pub mod wire;

pub use http::{HttpProvider, HttpProviderConfig};
pub use memorizer::MemorizerModel;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_PROMPT_TEMPLATE: &str = "Please complete the following text: {prefix}";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("prompt_template must contain exactly one {{prefix}} placeholder")]
    BadTemplate,
    #[error("network error calling {provider}: {message}")]
    Network { provider: String, message: String },
    #[error("request to {provider} timed out")]
    Timeout { provider: String },
    #[error("{provider} returned status {status}: {body_excerpt}")]
    Status {
        provider: String,
        status: u16,
        body_excerpt: String,
        /// Parsed Retry-After header, when the provider sent one.
        retry_after_secs: Option<u64>,
    },
    #[error("malformed response from {provider}: {message}")]
    MalformedResponse { provider: String, message: String },
}

impl ProviderError {
    /// Network failures, timeouts, 429 and 5xx are worth retrying; other
    /// 4xx statuses are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Network { .. } | ProviderError::Timeout { .. } => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub prompt_template: String,
    pub system_message: Option<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model: String::new(),
            temperature: 0.0,
            max_tokens: 50,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            system_message: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt_template.matches("{prefix}").count() != 1 {
            return Err(ProviderError::BadTemplate);
        }
        Ok(())
    }

    pub fn render_prompt(&self, prefix_text: &str) -> String {
        self.prompt_template.replace("{prefix}", prefix_text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub request_id: String,
    pub params: GenerationParams,
    pub prompt_text: String,
    pub output_text: String,
    pub provider_name: String,
    pub latency_ms: u64,
    pub finish_reason: FinishReason,
    pub timestamp: DateTime<Utc>,
}

impl Completion {
    pub fn timestamp_rfc3339(&self) -> String {
        self.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

/// Deterministic request identity: the same provider, parameters, and prompt
/// always hash to the same id, which is what makes reruns resumable.
pub fn request_id(provider_name: &str, params: &GenerationParams, prompt_text: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [
        provider_name,
        &params.model,
        &format!("{:?}", params.temperature),
        &params.max_tokens.to_string(),
        &params.prompt_template,
        params.system_message.as_deref().unwrap_or(""),
        prompt_text,
    ] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(&hasher.finalize()[..16])
}

/// A completion backend. Implementations must be safe to call from multiple
/// threads at once.
pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(
        &self,
        prefix_text: &str,
        params: &GenerationParams,
    ) -> Result<Completion, ProviderError>;
}
