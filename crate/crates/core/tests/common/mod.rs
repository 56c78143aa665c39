#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use memetopic::corpus::{Corpus, MemeDocument};
use memetopic::pipeline::RunConfig;
use memetopic::representation::{RepresentationMethod, TopicRepresentation};

pub const GOLDEN_REPLAY_PBM_DIGEST: &str = "029912d4fa4909a50231eb4ea8f2a42b4795a452d63bc44b6dd4a79b9aeb2021";
pub const GOLDEN_REPLAY_WSM_DIGEST: &str = "7e91aad65024b6544c828f2a94009ab6403b18387e6fffb8c8f01e0149ede57d";

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Loads a fixture config and redirects its output.
pub fn fixture_config(name: &str, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(fixture(name)).expect("fixture config");
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn tokenized_corpus(docs: &[Vec<String>]) -> Corpus {
    let docs = docs
        .iter()
        .enumerate()
        .map(|(i, tokens)| MemeDocument {
            id: format!("d{i:03}"),
            caption: String::new(),
            overlay_text: String::new(),
            tokens: tokens.clone(),
        })
        .collect();
    Corpus::from_documents(docs).expect("corpus")
}

pub fn rep(topic: &str, words: &[String]) -> TopicRepresentation {
    TopicRepresentation {
        topic: topic.to_string(),
        words: words.to_vec(),
        method: RepresentationMethod::Ctfidf,
        backfilled: 0,
        dropped: Vec::new(),
        fallback: false,
    }
}

/// Brute-force class weights: concatenate each class, count by linear scans.
pub fn brute_ctfidf(classes: &[(String, Vec<Vec<String>>)]) -> BTreeMap<(String, String), f64> {
    let c = classes.len() as f64;
    let class_docs: Vec<Vec<&String>> = classes
        .iter()
        .map(|(_, docs)| docs.iter().flatten().collect())
        .collect();
    let vocab: BTreeSet<&String> = class_docs.iter().flatten().copied().collect();
    let mut out = BTreeMap::new();
    for word in vocab {
        let df = class_docs.iter().filter(|d| d.contains(&word)).count() as f64;
        let idf = (1.0 + (1.0 + c) / (1.0 + df)).ln();
        for ((label, _), doc) in classes.iter().zip(&class_docs) {
            let tf = doc.iter().filter(|w| **w == word).count() as f64;
            out.insert((label.clone(), word.clone()), tf * idf);
        }
    }
    out
}

/// Brute-force NPMI: document counts by scanning every token list.
pub fn brute_npmi(docs: &[Vec<String>], w1: &str, w2: &str, eps: f64) -> f64 {
    let n = docs.len() as f64;
    let has = |d: &Vec<String>, w: &str| d.iter().any(|t| t == w);
    let c1 = docs.iter().filter(|d| has(d, w1)).count() as f64;
    let c2 = docs.iter().filter(|d| has(d, w2)).count() as f64;
    let c12 = docs.iter().filter(|d| has(d, w1) && has(d, w2)).count() as f64;
    let (p1, p2, p12) = (c1 / n, c2 / n, c12 / n);
    let v = ((p12 + eps) / (p1 * p2 + eps)).ln() / -(p12 + eps).ln();
    if v.is_nan() {
        return 1.0;
    }
    v.clamp(-1.0, 1.0)
}

/// Mean pairwise brute-force NPMI of one word list.
pub fn brute_topic_npmi(docs: &[Vec<String>], words: &[String], eps: f64) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            sum += brute_npmi(docs, &words[i], &words[j], eps);
            pairs += 1;
        }
    }
    sum / pairs as f64
}
