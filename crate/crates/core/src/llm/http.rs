use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};
use serde_json::{json, Value};

use super::{BackendConfig, ChatBackend, ChatExchange, LlmOutcome, RateLimiter, TokenUsage};
use crate::error::{Error, Result};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Markers in an error body that identify a content-moderation block.
const POLICY_MARKERS: [&str; 4] = ["content_policy", "content_filter", "moderation", "flagged"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal POST-JSON transport, swappable for tests.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpResponse, String> {
        let mut request = self.client.post(url).timeout(timeout).json(body);
        if let Some(token) = bearer {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    endpoint: String,
    model_name: String,
    max_tokens: u32,
    temperature: f64,
    max_retries: u32,
    base_delay: Duration,
    timeout: Duration,
    api_key: Option<String>,
    limiter: RateLimiter,
    transport: Arc<dyn Transport>,
}

enum Attempt {
    Done(LlmOutcome),
    Retry(String),
}

impl HttpBackend {
    pub fn from_config(cfg: &BackendConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        if !(0.0..=2.0).contains(&cfg.temperature) {
            return Err(Error::Config(format!("temperature {} outside [0, 2]", cfg.temperature)));
        }
        Ok(HttpBackend {
            endpoint: cfg.endpoint.clone(),
            model_name: cfg.model_name.clone(),
            max_tokens: cfg.max_tokens,
            temperature: cfg.temperature,
            max_retries: cfg.max_retries,
            base_delay: Duration::from_millis(cfg.retry_base_delay_ms),
            timeout: Duration::from_secs(cfg.timeout_secs),
            api_key: std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty()),
            limiter: RateLimiter::new(cfg.requests_per_minute),
            transport,
        })
    }

    pub fn request_body(&self, exchange: &ChatExchange) -> Value {
        let messages: Vec<Value> = exchange
            .messages()
            .into_iter()
            .map(|(role, content)| json!({ "role": role, "content": content }))
            .collect();
        json!({
            "model": self.model_name,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(MAX_BACKOFF)
    }

    fn attempt(&self, body: &Value) -> Attempt {
        self.limiter.acquire();
        let response = match self
            .transport
            .post_json(&self.endpoint, self.api_key.as_deref(), body, self.timeout)
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e),
        };
        match response.status {
            200..=299 => Attempt::Done(parse_completion(&response.body)),
            408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {}: {}", response.status, response.body)),
            400..=499 if is_policy_error(&response.body) => {
                Attempt::Done(LlmOutcome::refused(response.body, TokenUsage::default()))
            }
            status => Attempt::Done(LlmOutcome::transport_error(format!("HTTP {status}: {}", response.body))),
        }
    }
}

fn is_policy_error(body: &str) -> bool {
    let lower = body.to_lowercase();
    POLICY_MARKERS.iter().any(|m| lower.contains(m))
}

fn parse_completion(body: &str) -> LlmOutcome {
    let unparseable = |text: &str| LlmOutcome {
        status: super::OutcomeStatus::Unparseable,
        text: text.to_string(),
        usage: TokenUsage::default(),
    };
    let Ok(value) = serde_json::from_str::<Value>(body) else {
        return unparseable(body);
    };
    let usage = TokenUsage {
        prompt: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        completion: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    };
    let choice = &value["choices"][0];
    let content = choice["message"]["content"].as_str().unwrap_or("");
    if choice["finish_reason"].as_str() == Some("content_filter") {
        return LlmOutcome::refused(content, usage);
    }
    if choice.is_null() {
        return unparseable(body);
    }
    LlmOutcome::ok(content, usage)
}

impl ChatBackend for HttpBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<LlmOutcome> {
        let body = self.request_body(exchange);
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                let delay = self.backoff(attempt - 1);
                debug!("retrying chat completion in {delay:?} (attempt {attempt})");
                std::thread::sleep(delay);
            }
            match self.attempt(&body) {
                Attempt::Done(outcome) => return Ok(outcome),
                Attempt::Retry(err) => {
                    warn!("chat completion attempt {} failed: {err}", attempt + 1);
                    last_error = err;
                }
            }
        }
        Ok(LlmOutcome::transport_error(last_error))
    }
}
