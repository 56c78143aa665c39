//! NPMI topic coherence and topic diversity.
//!
//! The reference corpus is the preprocessed meme corpus. Co-occurrence is
//! counted at document level: two words co-occur when both appear in the
//! same document, regardless of position.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::is_reserved_label;
use crate::representation::TopicRepresentation;

pub const DEFAULT_EPSILON: f64 = 1e-6;

pub const ESTIMATOR: &str = "document-level boolean co-occurrence; \
     npmi = ln((p12 + eps) / (p1 * p2 + eps)) / -ln(p12 + eps), clamped to [-1, 1]";

/// NPMI from raw document counts over `n` documents.
pub fn npmi_from_counts(c1: u32, c2: u32, c12: u32, n: u32, epsilon: f64) -> f64 {
    let n = f64::from(n);
    let p1 = f64::from(c1) / n;
    let p2 = f64::from(c2) / n;
    let p12 = f64::from(c12) / n;
    let joint = p12 + epsilon;
    let denom = -joint.ln();
    if denom == 0.0 {
        // p12 + eps == 1: the pair is in every document
        return 1.0;
    }
    let value = (joint / (p1 * p2 + epsilon)).ln() / denom;
    value.clamp(-1.0, 1.0)
}

fn check_inputs(corpus: &Corpus, epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if corpus.total_docs() == 0 {
        return Err(Error::Config("reference corpus has no documents".into()));
    }
    Ok(())
}

/// NPMI of a word pair. Words absent from the corpus count zero.
pub fn npmi_pair(w1: &str, w2: &str, corpus: &Corpus, epsilon: f64) -> Result<f64> {
    check_inputs(corpus, epsilon)?;
    let joint = if w1 == w2 {
        corpus.document_count(w1)
    } else {
        corpus.joint_document_count(w1, w2)
    };
    Ok(npmi_from_counts(
        corpus.document_count(w1),
        corpus.document_count(w2),
        joint,
        corpus.total_docs() as u32,
        epsilon,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedTopic {
    pub topic: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub per_topic: BTreeMap<String, f64>,
    /// Mean of `per_topic`; 0.0 when no topic qualifies.
    pub mean_npmi: f64,
    pub excluded: Vec<ExcludedTopic>,
}

/// Mean pairwise NPMI per topic. Representations with fewer than two words
/// are excluded and listed, as are reserved topics.
pub fn coherence(reps: &[TopicRepresentation], corpus: &Corpus, epsilon: f64) -> Result<Coherence> {
    score_topics(reps, corpus, epsilon, false)
}

fn score_topics(
    reps: &[TopicRepresentation],
    corpus: &Corpus,
    epsilon: f64,
    include_reserved: bool,
) -> Result<Coherence> {
    check_inputs(corpus, epsilon)?;
    let mut excluded = Vec::new();
    let mut scored = Vec::new();
    for rep in reps {
        if !include_reserved && is_reserved_label(&rep.topic) {
            excluded.push(ExcludedTopic {
                topic: rep.topic.clone(),
                reason: "reserved".into(),
            });
        } else if rep.words.len() < 2 {
            excluded.push(ExcludedTopic {
                topic: rep.topic.clone(),
                reason: format!("{} word(s)", rep.words.len()),
            });
        } else {
            scored.push(rep);
        }
    }

    let counts = corpus.cooccurrence_counts(scored.iter().flat_map(|r| r.words.iter().map(String::as_str)));
    let mut per_topic = BTreeMap::new();
    for rep in scored {
        let words = &rep.words;
        let mut sum = 0.0;
        let mut pairs = 0u32;
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                let (a, b) = (&words[i], &words[j]);
                sum += npmi_from_counts(
                    counts.count(a),
                    counts.count(b),
                    counts.pair(a, b),
                    counts.total_docs,
                    epsilon,
                );
                pairs += 1;
            }
        }
        per_topic.insert(rep.topic.clone(), sum / f64::from(pairs));
    }
    let mean_npmi = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.values().sum::<f64>() / per_topic.len() as f64
    };
    Ok(Coherence {
        per_topic,
        mean_npmi,
        excluded,
    })
}

/// Distinct words over total words across all representations; 0.0 when
/// there are no words at all.
pub fn diversity(reps: &[TopicRepresentation]) -> f64 {
    let total: usize = reps.iter().map(|r| r.words.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let distinct: BTreeSet<&str> = reps.iter().flat_map(|r| r.words.iter().map(String::as_str)).collect();
    distinct.len() as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationOptions {
    pub epsilon: f64,
    /// Score Miscellaneous / Inappropriate too.
    pub include_reserved: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            epsilon: DEFAULT_EPSILON,
            include_reserved: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub mean_npmi: f64,
    pub diversity: f64,
    pub epsilon: f64,
    pub k: usize,
    pub words_per_topic: usize,
    pub per_topic: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<ExcludedTopic>,
    pub estimator: String,
    pub config_digest: String,
}

/// Coherence and diversity over `reps`. Reserved topics are dropped from
/// both metrics unless `include_reserved`.
pub fn evaluate(reps: &[TopicRepresentation], corpus: &Corpus, opts: &EvaluationOptions) -> Result<CoherenceReport> {
    let mut excluded = Vec::new();
    let kept: Vec<TopicRepresentation> = if opts.include_reserved {
        reps.to_vec()
    } else {
        reps.iter()
            .filter(|r| {
                let reserved = is_reserved_label(&r.topic);
                if reserved {
                    excluded.push(ExcludedTopic {
                        topic: r.topic.clone(),
                        reason: "reserved".into(),
                    });
                }
                !reserved
            })
            .cloned()
            .collect()
    };
    let coh = score_topics(&kept, corpus, opts.epsilon, opts.include_reserved)?;
    excluded.extend(coh.excluded);
    Ok(CoherenceReport {
        mean_npmi: coh.mean_npmi,
        diversity: diversity(&kept),
        epsilon: opts.epsilon,
        k: kept.len(),
        words_per_topic: kept.iter().map(|r| r.words.len()).max().unwrap_or(0),
        per_topic: coh.per_topic,
        excluded,
        estimator: ESTIMATOR.to_string(),
        config_digest: String::new(),
    })
}

pub fn write_report(path: impl AsRef<Path>, report: &CoherenceReport) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
