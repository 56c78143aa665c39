//! Collapsing the generated label set down to `K` topics.
//!
//! Two interchangeable strategies:
//!
//! - **Prompt-based matching** ([`collapse_pbm`]): repeatedly take the least
//!   frequent topic and ask the LLM which of the top-`M` most frequent topics
//!   subsumes it. A failed match sends the topic's memes to Miscellaneous.
//! - **Word-similarity matching** ([`collapse_wsm`]): repeatedly merge the
//!   pair of topics whose top-20 c-TF-IDF words overlap the most.
//!
//! Reserved clusters (Miscellaneous, Inappropriate) never merge and do not
//! count toward `K`. Membership is kept as a multiset of document ids so the
//! total multiset across all clusters is conserved by every step.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::ctfidf::{CtfidfTable, TopicWordSet};
use crate::error::{Error, Result};
use crate::generation::{parse_topic_list, Provenance, TopicAssignment};
use crate::llm::{format_numbered_list, format_quoted_list, ChatExchange, Gateway, OutcomeStatus};
use crate::{is_reserved_label, label_key, INAPPROPRIATE, MISCELLANEOUS};

pub const COLLAPSE_SYSTEM: &str = "You are designated as an AI assistant that determine the most appropriate overarching topic from a given list of topics that best corresponds to a current topic. Specifically, you are required to identify the most fitting topic from the provided list that is associated with the given topic, without providing any topics that are not included in the given list of topics.";

pub const COLLAPSE_QUESTION: &str =
    "What is the most suitable topic from the given topics that corresponds to the current topic?";

const DEMO_CANDIDATES: [&str; 6] = ["Military", "Politics", "Sports", "Technology", "Finance", "Healthcare"];
const DEMO_CURRENT: &str = "War";
const DEMO_ANSWER: &str = "Military";

pub const DEFAULT_WINDOW: usize = 40;
pub const WSM_TOP_WORDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollapseMethod {
    Pbm,
    Wsm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeReason {
    /// The LLM picked a listed topic, or WSM found overlapping words.
    Matched,
    /// The LLM answered with a topic outside the candidate window.
    NotInList,
    Refused,
    Unparseable,
    TransportError,
    /// WSM fallback when no remaining pair shares a word.
    ZeroSimilarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub step: usize,
    pub source: String,
    pub target: String,
    pub method: CollapseMethod,
    pub reason: MergeReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

/// One topic cluster: a label and its member documents with multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub label: String,
    pub members: BTreeMap<String, u32>,
}

impl Cluster {
    fn new(label: &str) -> Self {
        Cluster {
            label: label.to_string(),
            members: BTreeMap::new(),
        }
    }

    /// Number of distinct memes carrying the topic.
    pub fn freq(&self) -> usize {
        self.members.len()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.members.keys().map(String::as_str)
    }

    fn absorb(&mut self, other: Cluster) {
        for (doc, n) in other.members {
            *self.members.entry(doc).or_default() += n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseState {
    /// Non-reserved topics keyed by case-folded label.
    topics: BTreeMap<String, Cluster>,
    misc: Cluster,
    inappropriate: Cluster,
    merge_log: Vec<MergeRecord>,
    k_target: usize,
    window: usize,
}

fn by_rank(a: &Cluster, b: &Cluster) -> Ordering {
    b.freq()
        .cmp(&a.freq())
        .then_with(|| label_key(&a.label).cmp(&label_key(&b.label)))
}

impl CollapseState {
    /// Seeds clusters from generation output. `k` counts non-reserved topics; `window >= 2`.
    pub fn from_assignments(assignments: &[TopicAssignment], k: usize, window: usize) -> Result<Self> {
        let mut state = Self::empty(k, window)?;
        for a in assignments {
            match a.provenance {
                Provenance::Miscellaneous => {
                    *state.misc.members.entry(a.doc_id.clone()).or_default() += 1;
                }
                Provenance::Inappropriate => {
                    *state.inappropriate.members.entry(a.doc_id.clone()).or_default() += 1;
                }
                Provenance::Generated => {
                    for label in &a.topics {
                        state.insert(label, &a.doc_id)?;
                    }
                }
            }
        }
        Ok(state)
    }

    pub fn empty(k: usize, window: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if window < 2 {
            return Err(Error::Config("window M must be at least 2".into()));
        }
        Ok(CollapseState {
            topics: BTreeMap::new(),
            misc: Cluster::new(MISCELLANEOUS),
            inappropriate: Cluster::new(INAPPROPRIATE),
            merge_log: Vec::new(),
            k_target: k,
            window,
        })
    }

    /// Adds one (label, document) slot.
    pub fn insert(&mut self, label: &str, doc_id: &str) -> Result<()> {
        let label = label.trim();
        if label.is_empty() || is_reserved_label(label) {
            return Err(Error::Config(format!("`{label}` is not a valid generated topic")));
        }
        let cluster = self
            .topics
            .entry(label_key(label))
            .or_insert_with(|| Cluster::new(label));
        *cluster.members.entry(doc_id.to_string()).or_default() += 1;
        Ok(())
    }

    pub fn k_target(&self) -> usize {
        self.k_target
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn merge_log(&self) -> &[MergeRecord] {
        &self.merge_log
    }

    pub fn topic_count(&self) -> usize {
        self.topics.len()
    }

    /// Non-reserved topics by descending frequency, ties by label.
    pub fn ranked(&self) -> Vec<&Cluster> {
        let mut ranked: Vec<&Cluster> = self.topics.values().collect();
        ranked.sort_by(|a, b| by_rank(a, b));
        ranked
    }

    pub fn topic(&self, label: &str) -> Option<&Cluster> {
        self.topics.get(&label_key(label))
    }

    pub fn miscellaneous(&self) -> &Cluster {
        &self.misc
    }

    pub fn inappropriate(&self) -> &Cluster {
        &self.inappropriate
    }

    /// Document-id multiset over every cluster, reserved ones included.
    pub fn doc_multiset(&self) -> BTreeMap<String, u32> {
        let mut out: BTreeMap<String, u32> = BTreeMap::new();
        for cluster in self.topics.values().chain([&self.misc, &self.inappropriate]) {
            for (doc, n) in &cluster.members {
                *out.entry(doc.clone()).or_default() += n;
            }
        }
        out
    }

    /// Moves `source` into `target` (which may be Miscellaneous) and logs it.
    fn apply(&mut self, record: MergeRecord) -> Result<()> {
        let source = self
            .topics
            .remove(&label_key(&record.source))
            .ok_or_else(|| Error::UnknownTopic(record.source.clone()))?;
        if label_key(&record.target) == label_key(MISCELLANEOUS) {
            self.misc.absorb(source);
        } else {
            let target = self
                .topics
                .get_mut(&label_key(&record.target))
                .ok_or_else(|| Error::UnknownTopic(record.target.clone()))?;
            target.absorb(source);
        }
        debug!("merge {} -> {} ({:?})", record.source, record.target, record.reason);
        self.merge_log.push(record);
        Ok(())
    }

    /// Re-applies a merge log to this (initial) state.
    pub fn replay(mut self, log: &[MergeRecord]) -> Result<Self> {
        for record in log {
            self.apply(record.clone())?;
        }
        Ok(self)
    }

    /// Final clustering as `{label: [doc ids]}`; non-empty reserved clusters included.
    pub fn clusters(&self) -> BTreeMap<String, Vec<String>> {
        let mut out = BTreeMap::new();
        for cluster in self.topics.values() {
            out.insert(cluster.label.clone(), cluster.doc_ids().map(str::to_string).collect());
        }
        for reserved in [&self.misc, &self.inappropriate] {
            if !reserved.members.is_empty() {
                out.insert(reserved.label.clone(), reserved.doc_ids().map(str::to_string).collect());
            }
        }
        out
    }

    pub fn summary(&self) -> CollapseSummary {
        let count = |reason: MergeReason| self.merge_log.iter().filter(|r| r.reason == reason).count();
        let routed: BTreeSet<&str> = self
            .merge_log
            .iter()
            .filter(|r| label_key(&r.target) == label_key(MISCELLANEOUS))
            .map(|r| r.source.as_str())
            .collect();
        CollapseSummary {
            k_target: self.k_target,
            window: self.window,
            topics: self.topics.len(),
            steps: self.merge_log.len(),
            merges: self
                .merge_log
                .iter()
                .filter(|r| label_key(&r.target) != label_key(MISCELLANEOUS))
                .count(),
            miscellaneous_routings: routed.len(),
            zero_similarity_merges: count(MergeReason::ZeroSimilarity),
            miscellaneous_docs: self.misc.freq(),
            inappropriate_docs: self.inappropriate.freq(),
        }
    }

    pub fn write_merge_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for r in &self.merge_log {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollapseSummary {
    pub k_target: usize,
    pub window: usize,
    pub topics: usize,
    pub steps: usize,
    pub merges: usize,
    pub miscellaneous_routings: usize,
    pub zero_similarity_merges: usize,
    pub miscellaneous_docs: usize,
    pub inappropriate_docs: usize,
}

fn collapse_user_turn<S: AsRef<str>>(candidates: &[S], current: &str) -> String {
    format!(
        "Topics:\n{}\n\nCurrent topic : {current}\n\n{COLLAPSE_QUESTION}",
        format_numbered_list(candidates)
    )
}

/// Asks which of `candidates` best subsumes `current`, with one worked demonstration.
pub fn build_collapse_prompt<S: AsRef<str>>(candidates: &[S], current: &str) -> ChatExchange {
    debug_assert!(!candidates.is_empty());
    debug_assert!(candidates.iter().all(|c| label_key(c.as_ref()) != label_key(current)));
    ChatExchange::new(COLLAPSE_SYSTEM)
        .demonstration(
            collapse_user_turn(&DEMO_CANDIDATES, DEMO_CURRENT),
            format_quoted_list(&[DEMO_ANSWER]),
        )
        .query(collapse_user_turn(candidates, current))
}

/// Prompt-based matching down to `K` topics.
///
/// Each step takes the least frequent topic and prompts with the top
/// `min(M, n - 1)` topics by frequency; ordering is recomputed after every step.
pub fn collapse_pbm(mut state: CollapseState, gateway: &Gateway) -> Result<CollapseState> {
    if state.topics.len() < state.k_target {
        warn!(
            "only {} topics for K = {}; nothing to collapse",
            state.topics.len(),
            state.k_target
        );
        return Ok(state);
    }
    while state.topics.len() > state.k_target {
        let ranked = state.ranked();
        let n = ranked.len();
        let current = ranked[n - 1].label.clone();
        let window: Vec<String> = ranked[..state.window.min(n - 1)]
            .iter()
            .map(|c| c.label.clone())
            .collect();
        let outcome = gateway.complete(&build_collapse_prompt(&window, &current))?;
        let (target, reason) = match outcome.status {
            OutcomeStatus::Ok => match parse_topic_list(&outcome.text) {
                Ok(labels) => {
                    let hit = labels
                        .iter()
                        .find_map(|l| window.iter().find(|w| label_key(w) == label_key(l)).cloned());
                    match hit {
                        Some(target) => (target, MergeReason::Matched),
                        None => (MISCELLANEOUS.to_string(), MergeReason::NotInList),
                    }
                }
                Err(_) => (MISCELLANEOUS.to_string(), MergeReason::Unparseable),
            },
            OutcomeStatus::Refused => (MISCELLANEOUS.to_string(), MergeReason::Refused),
            OutcomeStatus::Unparseable => (MISCELLANEOUS.to_string(), MergeReason::Unparseable),
            OutcomeStatus::TransportError => (MISCELLANEOUS.to_string(), MergeReason::TransportError),
        };
        let step = state.merge_log.len();
        state.apply(MergeRecord {
            step,
            source: current,
            target,
            method: CollapseMethod::Pbm,
            reason,
            similarity: None,
        })?;
    }
    info!("prompt-based collapse finished: {:?}", state.summary());
    Ok(state)
}

/// Shared words over the smaller set size.
pub fn topic_similarity(a: &TopicWordSet, b: &TopicWordSet) -> Result<f64> {
    let (shared, smaller) = overlap(a, b)?;
    Ok(shared as f64 / smaller as f64)
}

fn overlap(a: &TopicWordSet, b: &TopicWordSet) -> Result<(usize, usize)> {
    if a.is_empty() {
        return Err(Error::EmptyWordSet(a.topic.clone()));
    }
    if b.is_empty() {
        return Err(Error::EmptyWordSet(b.topic.clone()));
    }
    let left: BTreeSet<&str> = a.words.iter().map(String::as_str).collect();
    let right: BTreeSet<&str> = b.words.iter().map(String::as_str).collect();
    let shared = left.intersection(&right).count();
    Ok((shared, left.len().min(right.len())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WsmOptions {
    /// Words per topic compared for overlap.
    pub top_words: usize,
    /// Rebuild c-TF-IDF after every merge. When false, a merged topic keeps
    /// the survivor's initial word set.
    pub recompute: bool,
    /// Let reserved clusters take part as c-TF-IDF classes (they still never merge).
    pub include_reserved: bool,
}

impl Default for WsmOptions {
    fn default() -> Self {
        WsmOptions {
            top_words: WSM_TOP_WORDS,
            recompute: true,
            include_reserved: false,
        }
    }
}

fn word_sets(state: &CollapseState, corpus: &Corpus, opts: &WsmOptions) -> Result<BTreeMap<String, TopicWordSet>> {
    let index = corpus.index();
    let docs = corpus.documents();
    let mut clusters: Vec<&Cluster> = state.topics.values().collect();
    if opts.include_reserved {
        clusters.extend([&state.misc, &state.inappropriate].into_iter().filter(|c| c.freq() > 0));
    }
    let mut classes = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let mut tokens = Vec::with_capacity(cluster.freq());
        for doc in cluster.doc_ids() {
            let pos = index.get(doc).ok_or_else(|| Error::UnknownDocument(doc.to_string()))?;
            tokens.push(docs[*pos].tokens.as_slice());
        }
        classes.push((cluster.label.clone(), tokens));
    }
    let table = CtfidfTable::from_classes(classes)?;
    state
        .topics
        .iter()
        .map(|(key, c)| Ok((key.clone(), table.top_words(&c.label, opts.top_words)?)))
        .collect()
}

/// Word-similarity matching down to `K` topics.
///
/// Each step merges the most similar pair (ties: lexicographically smallest
/// label pair), folding the less frequent topic into the more frequent one.
/// Topics with no words have similarity 0. If every pair scores 0, the two
/// least frequent topics merge and the step is logged as a zero-similarity merge.
pub fn collapse_wsm(mut state: CollapseState, corpus: &Corpus, opts: &WsmOptions) -> Result<CollapseState> {
    if state.topics.len() < state.k_target {
        warn!(
            "only {} topics for K = {}; nothing to collapse",
            state.topics.len(),
            state.k_target
        );
        return Ok(state);
    }
    let mut sets = if state.topics.len() > state.k_target {
        word_sets(&state, corpus, opts)?
    } else {
        BTreeMap::new()
    };
    while state.topics.len() > state.k_target {
        if opts.recompute && !state.merge_log.is_empty() {
            sets = word_sets(&state, corpus, opts)?;
        }
        let keys: Vec<&String> = state.topics.keys().collect();
        // (shared, smaller, i, j): best ratio, first pair in key order on ties
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                let (shared, smaller) = overlap(&sets[keys[i]], &sets[keys[j]]).unwrap_or((0, 1));
                let better = match best {
                    None => true,
                    Some((bs, bm, _, _)) => shared * bm > bs * smaller,
                };
                if better {
                    best = Some((shared, smaller, i, j));
                }
            }
        }
        let (shared, smaller, i, j) = best.expect("at least two topics");
        let step = state.merge_log.len();
        let record = if shared == 0 {
            let ranked = state.ranked();
            let n = ranked.len();
            MergeRecord {
                step,
                source: ranked[n - 1].label.clone(),
                target: ranked[n - 2].label.clone(),
                method: CollapseMethod::Wsm,
                reason: MergeReason::ZeroSimilarity,
                similarity: Some(0.0),
            }
        } else {
            let a = &state.topics[keys[i]];
            let b = &state.topics[keys[j]];
            let (survivor, absorbed) = if by_rank(a, b) == Ordering::Greater {
                (b, a)
            } else {
                (a, b)
            };
            MergeRecord {
                step,
                source: absorbed.label.clone(),
                target: survivor.label.clone(),
                method: CollapseMethod::Wsm,
                reason: MergeReason::Matched,
                similarity: Some(shared as f64 / smaller as f64),
            }
        };
        sets.remove(&label_key(&record.source));
        state.apply(record)?;
    }
    info!("word-similarity collapse finished: {:?}", state.summary());
    Ok(state)
}
