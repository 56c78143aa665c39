//! Class-based TF-IDF over topic clusters.
//!
//! All member documents of a topic are concatenated into one class document.
//! For word `x` and class `c`:
//!
//! ```text
//! W(x, c) = tf(x, c) * ln(1 + (1 + C) / (1 + df(x)))
//! ```
//!
//! where `tf(x, c)` counts occurrences of `x` in the class document, `df(x)`
//! is the number of classes containing `x`, and `C` is the number of classes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::generation::{Provenance, TopicAssignment};
use crate::{is_reserved_label, label_key, INAPPROPRIATE, MISCELLANEOUS};

#[derive(Debug, Clone, PartialEq)]
pub struct CtfidfTable {
    classes: Vec<String>,
    class_tf: Vec<BTreeMap<String, u64>>,
    df: BTreeMap<String, u32>,
    weights: Vec<BTreeMap<String, f64>>,
}

/// Ranked top words of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWordSet {
    pub topic: String,
    pub words: Vec<String>,
    pub scores: Vec<f64>,
    pub cap: usize,
}

impl TopicWordSet {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The weight formula on its own.
pub fn ctfidf_weight(tf: u64, df: u32, num_classes: usize) -> f64 {
    let idf = (1.0 + (1.0 + num_classes as f64) / (1.0 + df as f64)).ln();
    tf as f64 * idf
}

impl CtfidfTable {
    /// Builds the table from `(label, member token lists)` pairs.
    /// Labels must be distinct case-insensitively.
    pub fn from_classes<'a, I, D>(classes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, D)>,
        D: IntoIterator<Item = &'a [String]>,
    {
        let mut labels = Vec::new();
        let mut seen = BTreeSet::new();
        let mut class_tf = Vec::new();
        for (label, docs) in classes {
            if !seen.insert(label_key(&label)) {
                return Err(Error::Config(format!("duplicate class `{label}`")));
            }
            let mut tf: BTreeMap<String, u64> = BTreeMap::new();
            for tokens in docs {
                for token in tokens {
                    *tf.entry(token.clone()).or_default() += 1;
                }
            }
            labels.push(label);
            class_tf.push(tf);
        }
        if labels.is_empty() {
            return Err(Error::NoClasses);
        }
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        for tf in &class_tf {
            for word in tf.keys() {
                *df.entry(word.clone()).or_default() += 1;
            }
        }
        let c = labels.len();
        let weights = class_tf
            .iter()
            .map(|tf| {
                tf.iter()
                    .map(|(w, &count)| (w.clone(), ctfidf_weight(count, df[w], c)))
                    .collect()
            })
            .collect();
        Ok(CtfidfTable {
            classes: labels,
            class_tf,
            df,
            weights,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn class_index(&self, topic: &str) -> Result<usize> {
        let key = label_key(topic);
        self.classes
            .iter()
            .position(|c| label_key(c) == key)
            .ok_or_else(|| Error::UnknownTopic(topic.to_string()))
    }

    pub fn contains(&self, topic: &str) -> bool {
        self.class_index(topic).is_ok()
    }

    pub fn tf(&self, topic: &str, word: &str) -> Result<u64> {
        let idx = self.class_index(topic)?;
        Ok(self.class_tf[idx].get(word).copied().unwrap_or(0))
    }

    pub fn df(&self, word: &str) -> u32 {
        self.df.get(word).copied().unwrap_or(0)
    }

    pub fn weight(&self, topic: &str, word: &str) -> Result<f64> {
        let idx = self.class_index(topic)?;
        Ok(self.weights[idx].get(word).copied().unwrap_or(0.0))
    }

    /// Number of distinct words in a class.
    pub fn distinct_words(&self, topic: &str) -> Result<usize> {
        Ok(self.class_tf[self.class_index(topic)?].len())
    }

    /// Up to `k` words by descending weight, ties broken lexicographically.
    pub fn top_words(&self, topic: &str, k: usize) -> Result<TopicWordSet> {
        let idx = self.class_index(topic)?;
        let mut ranked: Vec<(&String, f64)> = self.weights[idx].iter().map(|(w, &s)| (w, s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        Ok(TopicWordSet {
            topic: self.classes[idx].clone(),
            words: ranked.iter().map(|(w, _)| (*w).clone()).collect(),
            scores: ranked.iter().map(|(_, s)| *s).collect(),
            cap: k,
        })
    }

    /// `class word tf df weight`, one row per nonzero cell.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "class\tword\ttf\tdf\tweight")?;
        for (idx, label) in self.classes.iter().enumerate() {
            for (word, tf) in &self.class_tf[idx] {
                writeln!(
                    out,
                    "{label}\t{word}\t{tf}\t{}\t{}",
                    self.df[word], self.weights[idx][word]
                )?;
            }
        }
        Ok(())
    }
}

/// Groups documents by assigned label and builds the table. A document with
/// several labels contributes fully to each. Reserved clusters are skipped
/// unless `include_reserved`.
pub fn build_ctfidf(assignments: &[TopicAssignment], corpus: &Corpus, include_reserved: bool) -> Result<CtfidfTable> {
    let index = corpus.index();
    // key -> (display label, member doc positions)
    let mut groups: BTreeMap<String, (String, BTreeSet<usize>)> = BTreeMap::new();
    for a in assignments {
        let pos = *index
            .get(a.doc_id.as_str())
            .ok_or_else(|| Error::UnknownDocument(a.doc_id.clone()))?;
        let labels: Vec<&str> = match a.provenance {
            Provenance::Generated => a.topics.iter().map(String::as_str).collect(),
            Provenance::Miscellaneous if include_reserved => vec![MISCELLANEOUS],
            Provenance::Inappropriate if include_reserved => vec![INAPPROPRIATE],
            _ => Vec::new(),
        };
        for label in labels {
            groups
                .entry(label_key(label))
                .or_insert_with(|| (label.to_string(), BTreeSet::new()))
                .1
                .insert(pos);
        }
    }
    let docs = corpus.documents();
    CtfidfTable::from_classes(groups.into_values().map(|(label, members)| {
        let tokens: Vec<&[String]> = members.iter().map(|&i| docs[i].tokens.as_slice()).collect();
        (label, tokens)
    }))
}

/// Builds the table from a final clustering `{label: [doc ids]}`. Reserved
/// clusters are skipped unless `include_reserved`.
pub fn build_ctfidf_from_clusters(
    clusters: &BTreeMap<String, Vec<String>>,
    corpus: &Corpus,
    include_reserved: bool,
) -> Result<CtfidfTable> {
    let index = corpus.index();
    let docs = corpus.documents();
    let mut classes = Vec::with_capacity(clusters.len());
    for (label, members) in clusters {
        if !include_reserved && is_reserved_label(label) {
            continue;
        }
        let mut tokens = Vec::with_capacity(members.len());
        for doc in members {
            let pos = index
                .get(doc.as_str())
                .ok_or_else(|| Error::UnknownDocument(doc.clone()))?;
            tokens.push(docs[*pos].tokens.as_slice());
        }
        classes.push((label.clone(), tokens));
    }
    CtfidfTable::from_classes(classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MemeDocument;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn table(classes: &[(&str, Vec<Vec<String>>)]) -> CtfidfTable {
        CtfidfTable::from_classes(
            classes
                .iter()
                .map(|(l, docs)| (l.to_string(), docs.iter().map(Vec::as_slice).collect::<Vec<_>>())),
        )
        .unwrap()
    }

    #[test]
    fn single_class_weight_is_tf_ln2() {
        let t = table(&[("only", vec![toks(&["x", "x", "x", "y"])])]);
        assert!((t.weight("only", "x").unwrap() - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((t.weight("only", "y").unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn word_in_all_three_classes() {
        let t = table(&[
            ("a", vec![toks(&["x", "x"])]),
            ("b", vec![toks(&["x"])]),
            ("c", vec![toks(&["x", "z"])]),
        ]);
        assert_eq!(t.df("x"), 3);
        assert!((t.weight("a", "x").unwrap() - 1.386_294_361_119_890_6).abs() < 1e-12);
        assert_eq!(t.weight("a", "z").unwrap(), 0.0);
        assert_eq!(t.tf("a", "z").unwrap(), 0);
    }

    #[test]
    fn no_classes_is_an_error() {
        let empty: Vec<(String, Vec<&[String]>)> = Vec::new();
        assert!(matches!(CtfidfTable::from_classes(empty), Err(Error::NoClasses)));
    }

    #[test]
    fn top_words_ranking_cap_and_ties() {
        let t = table(&[
            ("t", vec![toks(&["b", "a", "c", "c", "d", "e", "f", "g"])]),
            ("u", vec![toks(&["z"])]),
        ]);
        let top = t.top_words("t", 20).unwrap();
        assert_eq!(top.words, ["c", "a", "b", "d", "e", "f", "g"]);
        assert_eq!(t.top_words("T", 2).unwrap().words, ["c", "a"]);
        assert!(matches!(t.top_words("missing", 3), Err(Error::UnknownTopic(l)) if l == "missing"));
    }

    #[test]
    fn top_ten_of_a_hundred_words() {
        let words: Vec<String> = (0..100).map(|i| format!("w{i:03}")).collect();
        let t = CtfidfTable::from_classes([("big".to_string(), vec![words.as_slice()])]).unwrap();
        assert_eq!(t.top_words("big", 10).unwrap().len(), 10);
    }

    #[test]
    fn builds_from_assignments_with_multi_topic_docs() {
        let mut docs = vec![
            MemeDocument::new("1", "", ""),
            MemeDocument::new("2", "", ""),
            MemeDocument::new("3", "", ""),
        ];
        docs[0].tokens = toks(&["army", "tank"]);
        docs[1].tokens = toks(&["army", "vote"]);
        docs[2].tokens = toks(&["junk"]);
        let corpus = Corpus::from_documents(docs).unwrap();
        let assignments = vec![
            TopicAssignment::generated("1", vec!["Military".into()]),
            TopicAssignment::generated("2", vec!["military".into(), "Politics".into()]),
            TopicAssignment::miscellaneous("3"),
        ];
        let t = build_ctfidf(&assignments, &corpus, false).unwrap();
        assert_eq!(t.classes(), ["Military", "Politics"]);
        assert_eq!(t.tf("Military", "army").unwrap(), 2);
        assert_eq!(t.tf("Politics", "army").unwrap(), 1);
        assert_eq!(t.df("army"), 2);

        let with_reserved = build_ctfidf(&assignments, &corpus, true).unwrap();
        assert_eq!(with_reserved.num_classes(), 3);
        assert_eq!(with_reserved.tf("Miscellaneous", "junk").unwrap(), 1);

        let bad = vec![TopicAssignment::generated("nope", vec!["X".into()])];
        assert!(matches!(
            build_ctfidf(&bad, &corpus, false),
            Err(Error::UnknownDocument(_))
        ));
    }

    #[test]
    fn tsv_dump() {
        let t = table(&[("a", vec![toks(&["x"])])]);
        let mut buf = Vec::new();
        t.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "class\tword\ttf\tdf\tweight");
        assert!(text.contains("a\tx\t1\t1\t0.693147"));
    }

    proptest! {
        #[test]
        fn idf_shared_across_classes_and_weight_proportional_to_tf(
            classes in proptest::collection::vec(proptest::collection::vec(0u8..8, 0..25), 1..6)
        ) {
            let docs: Vec<Vec<String>> = classes.iter().map(|c| c.iter().map(|w| format!("w{w}")).collect()).collect();
            let t = CtfidfTable::from_classes(
                docs.iter().enumerate().map(|(i, d)| (format!("c{i}"), vec![d.as_slice()])),
            ).unwrap();
            for w in (0..8).map(|w| format!("w{w}")) {
                let mut ratio: Option<f64> = None;
                for i in 0..docs.len() {
                    let label = format!("c{i}");
                    let tf = t.tf(&label, &w).unwrap();
                    let weight = t.weight(&label, &w).unwrap();
                    prop_assert!(weight >= 0.0);
                    prop_assert_eq!(weight == 0.0, tf == 0);
                    if tf > 0 {
                        let r = weight / tf as f64;
                        if let Some(prev) = ratio {
                            prop_assert!((prev - r).abs() < 1e-12);
                        }
                        ratio = Some(r);
                    }
                }
            }
        }
    }
}
