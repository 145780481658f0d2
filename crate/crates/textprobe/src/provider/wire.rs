//! OpenAI-compatible chat-completions request/response bodies.
//!
//! Field order in the encoded request is fixed by the struct definitions so
//! that recorded fixtures stay byte-stable.

use serde::{Deserialize, Serialize};

use super::{FinishReason, GenerationParams, ProviderError};

#[derive(Debug, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
pub struct ChatChoice {
    pub message: ChatMessage,
    pub finish_reason: Option<String>,
}

pub fn encode_request(params: &GenerationParams, prompt_text: &str) -> Vec<u8> {
    let mut messages = Vec::new();
    if let Some(system) = &params.system_message {
        messages.push(ChatMessage {
            role: "system".into(),
            content: system.clone(),
        });
    }
    messages.push(ChatMessage {
        role: "user".into(),
        content: prompt_text.to_string(),
    });
    let req = ChatRequest {
        model: params.model.clone(),
        messages,
        temperature: params.temperature,
        max_tokens: params.max_tokens,
    };
    serde_json::to_vec(&req).expect("chat request serialization cannot fail")
}

pub fn decode_response(
    provider: &str,
    body: &[u8],
) -> Result<(String, FinishReason), ProviderError> {
    let parsed: ChatResponse =
        serde_json::from_slice(body).map_err(|e| ProviderError::MalformedResponse {
            provider: provider.to_string(),
            message: e.to_string(),
        })?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::MalformedResponse {
            provider: provider.to_string(),
            message: "response contains zero choices".into(),
        })?;
    let finish = match choice.finish_reason.as_deref() {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Other,
    };
    Ok((choice.message.content, finish))
}
