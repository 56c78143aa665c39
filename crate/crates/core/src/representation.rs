//! Ten-word topic representations.
//!
//! Either the top c-TF-IDF words directly, or an LLM pick of ten words from
//! the top-100 c-TF-IDF candidates. LLM answers are filtered against the
//! candidate list and topped up from the c-TF-IDF ranking when short.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctfidf::CtfidfTable;
use crate::error::{Error, Result};
use crate::generation::parse_topic_list;
use crate::is_reserved_label;
use crate::llm::{format_numbered_list, format_quoted_list, ChatExchange, Gateway, OutcomeStatus};

pub const REPRESENTATION_WORDS: usize = 10;
pub const LLM_CANDIDATE_WORDS: usize = 100;

pub const WORDRANK_SYSTEM: &str = "You are designated as an AI assistant that given a list of words and a topic, determines the top 10 words related to the topic, without providing any words that are not included in the above list of words.";

pub const WORDRANK_QUESTION: &str = "Given the above topic, list the top 10 words related to the topic.";

const DEMO_TOPIC: &str = "technology";
const DEMO_WORDS: [&str; 16] = [
    "singapore",
    "tracetogether",
    "computer",
    "robot",
    "lol",
    "google",
    "iphone",
    "people",
    "airpods",
    "internet",
    "time",
    "video",
    "tiktok",
    "day",
    "friend",
    "message",
];
const DEMO_ANSWER: [&str; 10] = [
    "computer",
    "robot",
    "google",
    "iphone",
    "airpods",
    "internet",
    "tracetogether",
    "video",
    "tiktok",
    "message",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationMethod {
    #[default]
    Ctfidf,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRepresentation {
    pub topic: String,
    pub words: Vec<String>,
    pub method: RepresentationMethod,
    /// Words restored from the c-TF-IDF ranking after filtering an LLM answer.
    pub backfilled: usize,
    /// LLM answer words that were not among the candidates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
    /// The LLM reply was unusable and the c-TF-IDF ranking was used instead.
    #[serde(default)]
    pub fallback: bool,
}

/// Top ten c-TF-IDF words.
pub fn represent_ctfidf(table: &CtfidfTable, topic: &str) -> Result<TopicRepresentation> {
    let top = table.top_words(topic, REPRESENTATION_WORDS)?;
    Ok(TopicRepresentation {
        topic: top.topic,
        words: top.words,
        method: RepresentationMethod::Ctfidf,
        backfilled: 0,
        dropped: Vec::new(),
        fallback: false,
    })
}

fn wordrank_user_turn<S: AsRef<str>>(topic: &str, words: &[S]) -> String {
    format!(
        "Topic : '{topic}'\nWords : {}\n\n{WORDRANK_QUESTION}",
        format_numbered_list(words)
    )
}

/// Word-ranking prompt over up to 100 candidates, with one demonstration.
pub fn build_wordrank_prompt<S: AsRef<str>>(topic: &str, candidates: &[S]) -> ChatExchange {
    debug_assert!(!candidates.is_empty() && candidates.len() <= LLM_CANDIDATE_WORDS);
    ChatExchange::new(WORDRANK_SYSTEM)
        .demonstration(
            wordrank_user_turn(DEMO_TOPIC, &DEMO_WORDS),
            format_quoted_list(&DEMO_ANSWER),
        )
        .query(wordrank_user_turn(topic, candidates))
}

/// Keeps in-list words (case-insensitive, first occurrence), at most ten,
/// then backfills from `ranking`. Returns (words, dropped, backfilled).
fn filter_and_backfill(answer: &[String], ranking: &[String]) -> (Vec<String>, Vec<String>, usize) {
    let candidates: HashMap<String, &String> = ranking.iter().map(|w| (w.to_lowercase(), w)).collect();
    let mut seen = HashSet::new();
    let mut words = Vec::new();
    let mut dropped = Vec::new();
    for raw in answer {
        match candidates.get(&raw.to_lowercase()) {
            Some(&word) => {
                if seen.insert(word.clone()) && words.len() < REPRESENTATION_WORDS {
                    words.push(word.clone());
                }
            }
            None => dropped.push(raw.clone()),
        }
    }
    let mut backfilled = 0;
    for word in ranking {
        if words.len() >= REPRESENTATION_WORDS {
            break;
        }
        if seen.insert(word.clone()) {
            words.push(word.clone());
            backfilled += 1;
        }
    }
    (words, dropped, backfilled)
}

/// LLM-chosen ten words from the top-100 c-TF-IDF candidates.
///
/// Refused or unparseable replies fall back to [`represent_ctfidf`] with
/// `fallback = true`. Only gateway errors (e.g. replay misses) propagate.
pub fn represent_llm(topic: &str, table: &CtfidfTable, gateway: &Gateway) -> Result<TopicRepresentation> {
    let top = table.top_words(topic, LLM_CANDIDATE_WORDS)?;
    let ranking = top.words;
    if ranking.is_empty() {
        return Ok(TopicRepresentation {
            topic: top.topic,
            words: Vec::new(),
            method: RepresentationMethod::Llm,
            backfilled: 0,
            dropped: Vec::new(),
            fallback: false,
        });
    }
    let outcome = gateway.complete(&build_wordrank_prompt(&top.topic, &ranking))?;
    let answer = match outcome.status {
        OutcomeStatus::Ok => parse_topic_list(&outcome.text).ok(),
        _ => None,
    };
    let Some(answer) = answer else {
        let mut rep = represent_ctfidf(table, topic)?;
        rep.method = RepresentationMethod::Llm;
        rep.fallback = true;
        return Ok(rep);
    };
    let (words, dropped, backfilled) = filter_and_backfill(&answer, &ranking);
    Ok(TopicRepresentation {
        topic: top.topic,
        words,
        method: RepresentationMethod::Llm,
        backfilled,
        dropped,
        fallback: false,
    })
}

/// Represents every non-reserved class of `table`, in class order.
pub fn represent_all(
    table: &CtfidfTable,
    method: RepresentationMethod,
    gateway: Option<&Gateway>,
) -> Result<Vec<TopicRepresentation>> {
    table
        .classes()
        .iter()
        .filter(|c| !is_reserved_label(c))
        .map(|topic| match method {
            RepresentationMethod::Ctfidf => represent_ctfidf(table, topic),
            RepresentationMethod::Llm => {
                let gateway = gateway.ok_or_else(|| Error::Config("llm representation needs a backend".into()))?;
                represent_llm(topic, table, gateway)
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct StoredRepresentation {
    words: Vec<String>,
    method: RepresentationMethod,
    backfilled: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dropped: Vec<String>,
    #[serde(default)]
    fallback: bool,
}

/// Writes `{topic: {words, method, backfilled, ...}}`.
pub fn write_representations(path: impl AsRef<Path>, reps: &[TopicRepresentation]) -> Result<()> {
    let path = path.as_ref();
    let map: BTreeMap<&str, StoredRepresentation> = reps
        .iter()
        .map(|r| {
            (
                r.topic.as_str(),
                StoredRepresentation {
                    words: r.words.clone(),
                    method: r.method,
                    backfilled: r.backfilled,
                    dropped: r.dropped.clone(),
                    fallback: r.fallback,
                },
            )
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&map)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_representations(path: impl AsRef<Path>) -> Result<Vec<TopicRepresentation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, StoredRepresentation> = serde_json::from_str(&text)?;
    Ok(map
        .into_iter()
        .map(|(topic, s)| TopicRepresentation {
            topic,
            words: s.words,
            method: s.method,
            backfilled: s.backfilled,
            dropped: s.dropped,
            fallback: s.fallback,
        })
        .collect())
}
