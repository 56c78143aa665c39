//! Chat-completion gateway.
//!
//! Every LLM call in the pipeline goes through [`Gateway::complete`]. The
//! gateway fronts one of three backends selected by [`BackendConfig::kind`]:
//!
//! - `http`: an OpenAI-compatible `/chat/completions` endpoint with retry,
//!   exponential backoff and a requests-per-minute limiter
//! - `mock`: a scripted rule table keyed on the query text
//! - `replay`: exact-match lookup in a JSONL cache of earlier responses,
//!   keyed by [`canonical_request_hash`]
//!
//! With `record = true` and a `cache_path`, live (or mock) responses are
//! appended to the cache so a later `replay` run needs no network.

mod cache;
mod http;
mod mock;
mod ratelimit;

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use cache::{CacheEntry, RecordingBackend, ReplayBackend, ResponseCache};
pub use http::{HttpBackend, HttpResponse, ReqwestTransport, Transport};
pub use mock::{MockAction, MockBackend, MockMatcher, MockRule, MockScript};
pub use ratelimit::RateLimiter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

/// A system message, demonstration turns, and the final user query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system: String,
    pub turns: Vec<Turn>,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
}

impl ChatExchange {
    pub fn new(system: impl Into<String>) -> Self {
        ChatExchange {
            system: system.into(),
            turns: Vec::new(),
            query: String::new(),
            reply: None,
        }
    }

    /// Appends one demonstration: a user prompt and the expected assistant answer.
    pub fn demonstration(mut self, user: impl Into<String>, assistant: impl Into<String>) -> Self {
        self.turns.push(Turn {
            role: Role::User,
            content: user.into(),
        });
        self.turns.push(Turn {
            role: Role::Assistant,
            content: assistant.into(),
        });
        self
    }

    pub fn query(mut self, query: impl Into<String>) -> Self {
        self.query = query.into();
        self
    }

    pub fn demonstration_pairs(&self) -> usize {
        self.turns.len() / 2
    }

    /// Turns must alternate user/assistant starting with user, in complete pairs.
    pub fn validate(&self) -> Result<()> {
        if !self.turns.len().is_multiple_of(2) {
            return Err(Error::Exchange("demonstration turns must come in pairs".into()));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if turn.role != expected {
                return Err(Error::Exchange(format!(
                    "turn {i} should be {} but is {}",
                    expected.as_str(),
                    turn.role.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Messages in wire order: system, demonstrations, query.
    pub fn messages(&self) -> Vec<(&'static str, &str)> {
        let mut out = Vec::with_capacity(self.turns.len() + 2);
        out.push(("system", self.system.as_str()));
        out.extend(self.turns.iter().map(|t| (t.role.as_str(), t.content.as_str())));
        out.push(("user", self.query.as_str()));
        out
    }
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model: &'a str,
    system: &'a str,
    turns: &'a [Turn],
    query: &'a str,
}

/// SHA-256 over a canonical JSON encoding of (model, system, turns, query).
pub fn canonical_request_hash(exchange: &ChatExchange, model_name: &str) -> String {
    let canonical = CanonicalRequest {
        model: model_name,
        system: &exchange.system,
        turns: &exchange.turns,
        query: &exchange.query,
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Ok,
    Refused,
    Unparseable,
    TransportError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.prompt += other.prompt;
        self.completion += other.completion;
    }

    /// Rough estimate of four characters per token plus a per-message overhead,
    /// for backends that do not report usage.
    pub fn estimate(exchange: &ChatExchange, reply: &str) -> TokenUsage {
        let prompt = exchange
            .messages()
            .iter()
            .map(|(_, content)| estimate_tokens(content) + 4)
            .sum();
        TokenUsage {
            prompt,
            completion: estimate_tokens(reply),
        }
    }
}

fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmOutcome {
    pub status: OutcomeStatus,
    pub text: String,
    pub usage: TokenUsage,
}

impl LlmOutcome {
    pub fn ok(text: impl Into<String>, usage: TokenUsage) -> Self {
        let text = text.into();
        let status = if text.trim().is_empty() {
            OutcomeStatus::Unparseable
        } else {
            OutcomeStatus::Ok
        };
        LlmOutcome { status, text, usage }
    }

    pub fn refused(text: impl Into<String>, usage: TokenUsage) -> Self {
        LlmOutcome {
            status: OutcomeStatus::Refused,
            text: text.into(),
            usage,
        }
    }

    pub fn transport_error(text: impl Into<String>) -> Self {
        LlmOutcome {
            status: OutcomeStatus::TransportError,
            text: text.into(),
            usage: TokenUsage::default(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == OutcomeStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
    Replay,
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".into()
}
fn default_model() -> String {
    "gpt-3.5-turbo".into()
}
fn default_max_tokens() -> u32 {
    256
}
fn default_max_retries() -> u32 {
    3
}
fn default_retry_delay_ms() -> u64 {
    1000
}
fn default_rpm() -> u32 {
    60
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

/// Default phrases that mark a reply as a moderation refusal.
pub fn default_refusal_phrases() -> Vec<String> {
    [
        "i cannot",
        "i can't",
        "i'm sorry",
        "i am sorry",
        "as an ai",
        "i'm unable",
        "i am unable",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_delay_ms")]
    pub retry_base_delay_ms: u64,
    /// Zero disables limiting.
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
    #[serde(default)]
    pub record: bool,
    /// Rule table for the mock backend.
    #[serde(default)]
    pub mock_rules_path: Option<PathBuf>,
    #[serde(default = "default_refusal_phrases")]
    pub refusal_phrases: Vec<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::default(),
            endpoint: default_endpoint(),
            model_name: default_model(),
            max_tokens: default_max_tokens(),
            temperature: 0.0,
            max_retries: default_max_retries(),
            retry_base_delay_ms: default_retry_delay_ms(),
            requests_per_minute: default_rpm(),
            timeout_secs: default_timeout_secs(),
            api_key_env: default_api_key_env(),
            cache_path: None,
            record: false,
            mock_rules_path: None,
            refusal_phrases: default_refusal_phrases(),
        }
    }
}

/// A source of chat completions.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, exchange: &ChatExchange) -> Result<LlmOutcome>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, exchange: &ChatExchange) -> Result<LlmOutcome> {
        (**self).complete(exchange)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, exchange: &ChatExchange) -> Result<LlmOutcome> {
        (**self).complete(exchange)
    }
}

/// Flags replies that read like a moderation refusal.
#[derive(Debug, Clone, Default)]
pub struct RefusalDetector {
    phrases: Vec<String>,
}

impl RefusalDetector {
    pub fn new(phrases: &[String]) -> Self {
        RefusalDetector {
            phrases: phrases.iter().map(|p| p.to_lowercase()).collect(),
        }
    }

    /// A reply that opens with a list is never treated as a refusal.
    pub fn is_refusal(&self, text: &str) -> bool {
        let trimmed = text.trim_start();
        if trimmed.starts_with('[') {
            return false;
        }
        let lower = trimmed.to_lowercase();
        self.phrases.iter().any(|p| lower.contains(p.as_str()))
    }
}

/// Running counters of gateway traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub calls: u64,
    pub ok: u64,
    pub refused: u64,
    pub unparseable: u64,
    pub transport_errors: u64,
    pub usage: TokenUsage,
}

impl GatewayStats {
    fn record(&mut self, outcome: &LlmOutcome) {
        self.calls += 1;
        match outcome.status {
            OutcomeStatus::Ok => self.ok += 1,
            OutcomeStatus::Refused => self.refused += 1,
            OutcomeStatus::Unparseable => self.unparseable += 1,
            OutcomeStatus::TransportError => self.transport_errors += 1,
        }
        self.usage.add(outcome.usage);
    }

    /// Counters accumulated since an earlier snapshot.
    pub fn since(&self, earlier: &GatewayStats) -> GatewayStats {
        GatewayStats {
            calls: self.calls - earlier.calls,
            ok: self.ok - earlier.ok,
            refused: self.refused - earlier.refused,
            unparseable: self.unparseable - earlier.unparseable,
            transport_errors: self.transport_errors - earlier.transport_errors,
            usage: TokenUsage {
                prompt: self.usage.prompt - earlier.usage.prompt,
                completion: self.usage.completion - earlier.usage.completion,
            },
        }
    }
}

/// Thread-safe front door for chat completions.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    model_name: String,
    refusals: RefusalDetector,
    stats: Mutex<GatewayStats>,
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static, model_name: impl Into<String>) -> Self {
        Gateway {
            backend: Box::new(backend),
            model_name: model_name.into(),
            refusals: RefusalDetector::new(&default_refusal_phrases()),
            stats: Mutex::new(GatewayStats::default()),
        }
    }

    pub fn with_refusal_phrases(mut self, phrases: &[String]) -> Self {
        self.refusals = RefusalDetector::new(phrases);
        self
    }

    /// Builds the backend stack described by `cfg`.
    pub fn from_config(cfg: &BackendConfig) -> Result<Self> {
        let transport: Arc<dyn Transport> = Arc::new(ReqwestTransport::new()?);
        Self::from_config_with_transport(cfg, transport)
    }

    /// Like [`Gateway::from_config`] with an injected HTTP transport.
    pub fn from_config_with_transport(cfg: &BackendConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        if cfg.record && cfg.cache_path.is_none() {
            return Err(Error::Config("record = true requires cache_path".into()));
        }
        let backend: Box<dyn ChatBackend> = match cfg.kind {
            BackendKind::Http => {
                let http = HttpBackend::from_config(cfg, transport)?;
                match (&cfg.cache_path, cfg.record) {
                    (Some(path), true) => {
                        Box::new(RecordingBackend::new(http, ResponseCache::open(path)?, &cfg.model_name))
                    }
                    _ => Box::new(http),
                }
            }
            BackendKind::Mock => {
                let path = cfg
                    .mock_rules_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("mock backend requires mock_rules_path".into()))?;
                let mock = MockBackend::new(MockScript::load(path)?);
                match (&cfg.cache_path, cfg.record) {
                    (Some(path), true) => {
                        Box::new(RecordingBackend::new(mock, ResponseCache::open(path)?, &cfg.model_name))
                    }
                    _ => Box::new(mock),
                }
            }
            BackendKind::Replay => {
                let path = cfg
                    .cache_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("replay backend requires cache_path".into()))?;
                let cache = ResponseCache::load(path, cfg.record)?;
                let fallback: Option<Box<dyn ChatBackend>> = if cfg.record {
                    Some(Box::new(HttpBackend::from_config(cfg, transport)?))
                } else {
                    None
                };
                Box::new(ReplayBackend::new(cache, &cfg.model_name, fallback))
            }
        };
        Ok(Gateway {
            backend,
            model_name: cfg.model_name.clone(),
            refusals: RefusalDetector::new(&cfg.refusal_phrases),
            stats: Mutex::new(GatewayStats::default()),
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    /// Sends one exchange. Only replay misses and malformed exchanges are errors;
    /// every other failure comes back as an [`LlmOutcome`] status.
    pub fn complete(&self, exchange: &ChatExchange) -> Result<LlmOutcome> {
        exchange.validate()?;
        let mut outcome = self.backend.complete(exchange)?;
        if outcome.status == OutcomeStatus::Ok && self.refusals.is_refusal(&outcome.text) {
            outcome.status = OutcomeStatus::Refused;
        }
        self.stats.lock().expect("gateway stats lock").record(&outcome);
        Ok(outcome)
    }

    pub fn stats(&self) -> GatewayStats {
        *self.stats.lock().expect("gateway stats lock")
    }
}

/// Renders labels the way the prompts expect answers: `['a', 'b']`.
/// Items containing a single quote are wrapped in double quotes.
pub fn format_quoted_list<S: AsRef<str>>(items: &[S]) -> String {
    let parts: Vec<String> = items
        .iter()
        .map(|item| {
            let item = item.as_ref();
            if item.contains('\'') && !item.contains('"') {
                format!("\"{item}\"")
            } else {
                format!("'{}'", item.replace('\'', "\\'"))
            }
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

/// Renders `1. a, 2. b, ...`.
pub fn format_numbered_list<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}. {}", i + 1, item.as_ref()))
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exchange() -> ChatExchange {
        ChatExchange::new("system prompt")
            .demonstration("first question", "['A']")
            .demonstration("second question", "['B']")
            .query("the query")
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let ex = exchange();
        let h = canonical_request_hash(&ex, "m");
        assert_eq!(h, canonical_request_hash(&ex.clone(), "m"));
        assert_eq!(h.len(), 64);

        let mut changed = ex.clone();
        changed.query = "the querY".into();
        assert_ne!(h, canonical_request_hash(&changed, "m"));
        assert_ne!(h, canonical_request_hash(&ex, "other-model"));

        let mut reordered = ex.clone();
        reordered.turns.swap(0, 2);
        reordered.turns.swap(1, 3);
        assert!(reordered.validate().is_ok());
        assert_ne!(h, canonical_request_hash(&reordered, "m"));
    }

    #[test]
    fn hash_ignores_reply() {
        let mut ex = exchange();
        let h = canonical_request_hash(&ex, "m");
        ex.reply = Some("['A']".into());
        assert_eq!(h, canonical_request_hash(&ex, "m"));
    }

    #[test]
    fn hash_is_pinned_across_platforms() {
        let ex = ChatExchange::new("s").demonstration("u", "a").query("q");
        // sha256 of {"model":"m","system":"s","turns":[{"role":"user","content":"u"},{"role":"assistant","content":"a"}],"query":"q"}
        let expected = hex::encode(Sha256::digest(
            br#"{"model":"m","system":"s","turns":[{"role":"user","content":"u"},{"role":"assistant","content":"a"}],"query":"q"}"#,
        ));
        assert_eq!(canonical_request_hash(&ex, "m"), expected);
    }

    #[test]
    fn validate_rejects_broken_turns() {
        let mut ex = exchange();
        ex.turns.pop();
        assert!(ex.validate().is_err());
        let mut ex = exchange();
        ex.turns.swap(0, 1);
        assert!(ex.validate().is_err());
    }

    #[test]
    fn messages_in_wire_order() {
        let ex = exchange();
        let roles: Vec<&str> = ex.messages().iter().map(|(r, _)| *r).collect();
        assert_eq!(roles, ["system", "user", "assistant", "user", "assistant", "user"]);
        assert_eq!(ex.messages().last().unwrap().1, "the query");
    }

    #[test]
    fn quoted_list_formatting() {
        assert_eq!(
            format_quoted_list(&["Politics", "Financial Crisis"]),
            "['Politics', 'Financial Crisis']"
        );
        assert_eq!(format_quoted_list(&["Women's Rights"]), "[\"Women's Rights\"]");
        assert_eq!(format_numbered_list(&["a", "b", "c"]), "1. a, 2. b, 3. c");
    }

    #[test]
    fn refusal_phrases() {
        let d = RefusalDetector::new(&default_refusal_phrases());
        assert!(d.is_refusal("I'm sorry, but I cannot help with that."));
        assert!(!d.is_refusal("['Politics']"));
        assert!(!d.is_refusal("Politics and war"));
    }

    #[test]
    fn replay_requires_cache_path() {
        let cfg = BackendConfig {
            kind: BackendKind::Replay,
            ..BackendConfig::default()
        };
        assert!(matches!(Gateway::from_config(&cfg), Err(Error::Config(_))));
    }
}
