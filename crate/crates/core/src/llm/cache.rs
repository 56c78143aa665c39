//! Append-only JSONL response cache for record/replay.
//!
//! One line per request: `{hash, model, request, response, timestamp}`.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{canonical_request_hash, ChatBackend, ChatExchange, LlmOutcome, OutcomeStatus};
use crate::corpus::read_jsonl_lines;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub hash: String,
    pub model: String,
    pub request: ChatExchange,
    pub response: LlmOutcome,
    pub timestamp: String,
}

#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, CacheEntry>>,
}

impl ResponseCache {
    /// Loads `path`. A missing file is an empty cache only when `allow_missing`.
    pub fn load(path: impl AsRef<Path>, allow_missing: bool) -> Result<Self> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            for entry in read_jsonl_lines(path, |line| serde_json::from_str::<CacheEntry>(line))? {
                // first recording wins
                entries.entry(entry.hash.clone()).or_insert(entry);
            }
        } else if !allow_missing {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "response cache not found"),
            ));
        }
        Ok(ResponseCache {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
        })
    }

    /// Opens for recording; the file is created on first append.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::load(path, true)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, hash: &str) -> Option<LlmOutcome> {
        self.entries
            .lock()
            .expect("cache lock")
            .get(hash)
            .map(|e| e.response.clone())
    }

    /// Appends unless the hash is already present. Transport errors are never cached.
    pub fn record(&self, exchange: &ChatExchange, model: &str, response: &LlmOutcome) -> Result<()> {
        if response.status == OutcomeStatus::TransportError {
            return Ok(());
        }
        let hash = canonical_request_hash(exchange, model);
        let mut entries = self.entries.lock().expect("cache lock");
        if entries.contains_key(&hash) {
            return Ok(());
        }
        let mut request = exchange.clone();
        request.reply = None;
        let entry = CacheEntry {
            hash: hash.clone(),
            model: model.to_string(),
            request,
            response: response.clone(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        entries.insert(hash, entry);
        Ok(())
    }
}

/// Passes requests to `inner` and appends every response to the cache.
pub struct RecordingBackend<B> {
    inner: B,
    cache: ResponseCache,
    model: String,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, cache: ResponseCache, model: &str) -> Self {
        RecordingBackend {
            inner,
            cache,
            model: model.to_string(),
        }
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, exchange: &ChatExchange) -> Result<LlmOutcome> {
        let outcome = self.inner.complete(exchange)?;
        self.cache.record(exchange, &self.model, &outcome)?;
        Ok(outcome)
    }
}

/// Serves recorded responses. On a miss, delegates to `fallback` (and records
/// its answer) when one is configured, otherwise fails with the request hash.
pub struct ReplayBackend {
    cache: ResponseCache,
    model: String,
    fallback: Option<Box<dyn ChatBackend>>,
}

impl ReplayBackend {
    pub fn new(cache: ResponseCache, model: &str, fallback: Option<Box<dyn ChatBackend>>) -> Self {
        ReplayBackend {
            cache,
            model: model.to_string(),
            fallback,
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<LlmOutcome> {
        let hash = canonical_request_hash(exchange, &self.model);
        if let Some(hit) = self.cache.get(&hash) {
            return Ok(hit);
        }
        match &self.fallback {
            Some(backend) => {
                debug!("replay miss {hash}; recording from live backend");
                let outcome = backend.complete(exchange)?;
                self.cache.record(exchange, &self.model, &outcome)?;
                Ok(outcome)
            }
            None => Err(Error::ReplayMiss { hash }),
        }
    }
}
