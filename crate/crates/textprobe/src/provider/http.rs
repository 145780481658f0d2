//! OpenAI-compatible HTTP provider with retry, backoff, an in-flight cap,
//! and a per-minute rate limit.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use chrono::Utc;

use super::wire::{decode_response, encode_request};
use super::{Completion, CompletionProvider, GenerationParams, ProviderError};

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub name: String,
    /// Endpoint root; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
}

impl HttpProviderConfig {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>) -> Self {
        HttpProviderConfig {
            name: name.into(),
            base_url: base_url.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(250),
            max_in_flight: 4,
            requests_per_minute: None,
        }
    }
}

pub struct HttpProvider {
    cfg: HttpProviderConfig,
    client: reqwest::blocking::Client,
    in_flight: Mutex<usize>,
    in_flight_cv: Condvar,
    recent: Mutex<VecDeque<Instant>>,
}

impl HttpProvider {
    pub fn new(cfg: HttpProviderConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .expect("reqwest client");
        HttpProvider {
            cfg,
            client,
            in_flight: Mutex::new(0),
            in_flight_cv: Condvar::new(),
            recent: Mutex::new(VecDeque::new()),
        }
    }

    fn acquire_slot(&self) -> SlotGuard<'_> {
        let mut count = self.in_flight.lock().unwrap();
        while *count >= self.cfg.max_in_flight {
            count = self.in_flight_cv.wait(count).unwrap();
        }
        *count += 1;
        SlotGuard { provider: self }
    }

    fn wait_for_rate_limit(&self) {
        let Some(per_minute) = self.cfg.requests_per_minute else {
            return;
        };
        loop {
            let wait = {
                let mut recent = self.recent.lock().unwrap();
                let now = Instant::now();
                while recent
                    .front()
                    .is_some_and(|t| now.duration_since(*t) >= Duration::from_secs(60))
                {
                    recent.pop_front();
                }
                if recent.len() < per_minute as usize {
                    recent.push_back(now);
                    None
                } else {
                    Some(Duration::from_secs(60) - now.duration_since(*recent.front().unwrap()))
                }
            };
            match wait {
                None => return,
                Some(d) => std::thread::sleep(d.min(Duration::from_secs(1))),
            }
        }
    }

    fn send_once(&self, body: &[u8]) -> Result<(String, super::FinishReason), ProviderError> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let mut req = self
            .client
            .post(&url)
            .header("Content-Type", "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout {
                    provider: self.cfg.name.clone(),
                }
            } else {
                ProviderError::Network {
                    provider: self.cfg.name.clone(),
                    message: e.to_string(),
                }
            }
        })?;
        let status = resp.status();
        let retry_after_secs = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        let bytes = resp.bytes().map_err(|e| ProviderError::Network {
            provider: self.cfg.name.clone(),
            message: e.to_string(),
        })?;
        if !status.is_success() {
            let excerpt: String = String::from_utf8_lossy(&bytes).chars().take(200).collect();
            return Err(ProviderError::Status {
                provider: self.cfg.name.clone(),
                status: status.as_u16(),
                body_excerpt: excerpt,
                retry_after_secs,
            });
        }
        decode_response(&self.cfg.name, &bytes)
    }
}

struct SlotGuard<'a> {
    provider: &'a HttpProvider,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.provider.in_flight.lock().unwrap();
        *count -= 1;
        self.provider.in_flight_cv.notify_one();
    }
}

impl CompletionProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn complete(
        &self,
        prefix_text: &str,
        params: &GenerationParams,
    ) -> Result<Completion, ProviderError> {
        params.validate()?;
        let prompt_text = params.render_prompt(prefix_text);
        let body = encode_request(params, &prompt_text);
        let _slot = self.acquire_slot();

        let started = Instant::now();
        let mut attempt = 0u32;
        let (output_text, finish_reason) = loop {
            self.wait_for_rate_limit();
            match self.send_once(&body) {
                Ok(result) => break result,
                Err(err) if err.is_retryable() && attempt < self.cfg.max_retries => {
                    let backoff = match &err {
                        ProviderError::Status {
                            retry_after_secs: Some(secs),
                            ..
                        } => Duration::from_secs(*secs),
                        _ => self.cfg.backoff_base * 2u32.pow(attempt),
                    };
                    std::thread::sleep(backoff);
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        };

        Ok(Completion {
            request_id: super::request_id(&self.cfg.name, params, &prompt_text),
            params: params.clone(),
            prompt_text,
            output_text,
            provider_name: self.cfg.name.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            finish_reason,
            timestamp: Utc::now(),
        })
    }
}
