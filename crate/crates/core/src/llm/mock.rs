//! Scripted backend: an ordered rule table matched against the query.

use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::{format_quoted_list, ChatBackend, ChatExchange, LlmOutcome, TokenUsage};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum MockMatcher {
    Always,
    /// Case-insensitive substring of the query.
    Contains(String),
    Regex(Regex),
}

impl MockMatcher {
    fn matches(&self, text: &str) -> bool {
        match self {
            MockMatcher::Always => true,
            MockMatcher::Contains(needle) => text.to_lowercase().contains(needle.as_str()),
            MockMatcher::Regex(re) => re.is_match(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockAction {
    Reply(String),
    Refuse,
    TransportError,
    /// Answer with the first `n` entries of the query's numbered list.
    FirstListed(usize),
}

#[derive(Debug, Clone)]
pub struct MockRule {
    pub matcher: MockMatcher,
    /// Optional extra condition on the system message.
    pub system_contains: Option<String>,
    pub action: MockAction,
}

impl MockRule {
    pub fn new(matcher: MockMatcher, action: MockAction) -> Self {
        MockRule {
            matcher,
            system_contains: None,
            action,
        }
    }

    pub fn contains(needle: &str, action: MockAction) -> Self {
        Self::new(MockMatcher::Contains(needle.to_lowercase()), action)
    }

    pub fn regex(pattern: &str, action: MockAction) -> Result<Self> {
        let re = Regex::new(pattern).map_err(|e| Error::Config(format!("mock rule regex: {e}")))?;
        Ok(Self::new(MockMatcher::Regex(re), action))
    }

    pub fn for_system(mut self, needle: &str) -> Self {
        self.system_contains = Some(needle.to_lowercase());
        self
    }

    fn matches(&self, exchange: &ChatExchange) -> bool {
        if let Some(needle) = &self.system_contains {
            if !exchange.system.to_lowercase().contains(needle.as_str()) {
                return false;
            }
        }
        self.matcher.matches(&exchange.query)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    #[serde(default)]
    contains: Option<String>,
    #[serde(default)]
    regex: Option<String>,
    #[serde(default)]
    system_contains: Option<String>,
    #[serde(default)]
    reply: Option<String>,
    #[serde(default)]
    refuse: bool,
    #[serde(default)]
    transport_error: bool,
    #[serde(default)]
    first_listed: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptSpec {
    rules: Vec<RuleSpec>,
    #[serde(default)]
    default_reply: Option<String>,
}

impl TryFrom<RuleSpec> for MockRule {
    type Error = Error;

    fn try_from(spec: RuleSpec) -> Result<Self> {
        let matcher = match (spec.contains, spec.regex) {
            (Some(_), Some(_)) => return Err(Error::Config("mock rule sets both contains and regex".into())),
            (Some(needle), None) => MockMatcher::Contains(needle.to_lowercase()),
            (None, Some(pattern)) => {
                MockMatcher::Regex(Regex::new(&pattern).map_err(|e| Error::Config(format!("mock rule regex: {e}")))?)
            }
            (None, None) => MockMatcher::Always,
        };
        let mut actions = Vec::new();
        if let Some(reply) = spec.reply {
            actions.push(MockAction::Reply(reply));
        }
        if spec.refuse {
            actions.push(MockAction::Refuse);
        }
        if spec.transport_error {
            actions.push(MockAction::TransportError);
        }
        if let Some(n) = spec.first_listed {
            actions.push(MockAction::FirstListed(n));
        }
        if actions.len() != 1 {
            return Err(Error::Config(
                "mock rule needs exactly one of reply, refuse, transport_error, first_listed".into(),
            ));
        }
        Ok(MockRule {
            matcher,
            system_contains: spec.system_contains.map(|s| s.to_lowercase()),
            action: actions.remove(0),
        })
    }
}

/// Ordered rules; the first match wins, otherwise `default_reply`.
#[derive(Debug, Clone)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    pub default_reply: String,
}

impl MockScript {
    pub const DEFAULT_REPLY: &'static str = "I am not sure what this is about.";

    pub fn new(rules: Vec<MockRule>) -> Self {
        MockScript {
            rules,
            default_reply: Self::DEFAULT_REPLY.to_string(),
        }
    }

    /// Parses the JSON rule file format:
    /// `{"rules": [{"contains": "obama", "reply": "['Politics']"}, ...], "default_reply": "..."}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScriptSpec = serde_json::from_str(text)?;
        let rules = spec
            .rules
            .into_iter()
            .map(MockRule::try_from)
            .collect::<Result<Vec<_>>>()?;
        Ok(MockScript {
            rules,
            default_reply: spec.default_reply.unwrap_or_else(|| Self::DEFAULT_REPLY.to_string()),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Pure function of the exchange: no state, no randomness.
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend { script }
    }

    pub fn from_rules(rules: Vec<MockRule>) -> Self {
        Self::new(MockScript::new(rules))
    }

    fn respond(&self, exchange: &ChatExchange) -> LlmOutcome {
        let action = self
            .script
            .rules
            .iter()
            .find(|r| r.matches(exchange))
            .map(|r| r.action.clone())
            .unwrap_or_else(|| MockAction::Reply(self.script.default_reply.clone()));
        match action {
            MockAction::Reply(text) => {
                let usage = TokenUsage::estimate(exchange, &text);
                LlmOutcome::ok(text, usage)
            }
            MockAction::Refuse => {
                let text = "content policy violation";
                LlmOutcome::refused(text, TokenUsage::estimate(exchange, ""))
            }
            MockAction::TransportError => LlmOutcome::transport_error("scripted transport failure"),
            MockAction::FirstListed(n) => {
                let items: Vec<String> = numbered_items(&exchange.query).into_iter().take(n).collect();
                let text = format_quoted_list(&items);
                let usage = TokenUsage::estimate(exchange, &text);
                LlmOutcome::ok(text, usage)
            }
        }
    }
}

/// Extracts `item` from every `N. item` entry (entries end at `,` or newline).
pub(crate) fn numbered_items(text: &str) -> Vec<String> {
    let re = Regex::new(r"(?:^|[\s,])\d+\.\s+([^,\n]+)").expect("static regex");
    re.captures_iter(text)
        .map(|c| c[1].trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl ChatBackend for MockBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<LlmOutcome> {
        Ok(self.respond(exchange))
    }
}
