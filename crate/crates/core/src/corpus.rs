//! Meme corpus ingestion, preprocessing and document-level statistics.
//!
//! Raw records carry an id, an image caption and the superimposed text. The
//! raw strings are what the LLM sees; the token lists produced by
//! [`Corpus::preprocess`] only feed c-TF-IDF and the coherence statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];

/// One meme flattened to text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemeDocument {
    pub id: String,
    pub caption: String,
    #[serde(rename = "text", alias = "overlay_text")]
    pub overlay_text: String,
    #[serde(default)]
    pub tokens: Vec<String>,
}

impl MemeDocument {
    pub fn new(id: impl Into<String>, caption: impl Into<String>, overlay_text: impl Into<String>) -> Self {
        MemeDocument {
            id: id.into(),
            caption: caption.into(),
            overlay_text: overlay_text.into(),
            tokens: Vec::new(),
        }
    }

    /// Caption first, then the superimposed text.
    pub fn raw_text(&self) -> String {
        format!("{} {}", self.caption, self.overlay_text)
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    caption: String,
    #[serde(alias = "overlay_text")]
    text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::Csv => "csv",
        })
    }
}

/// Token filtering rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub stopwords: BTreeSet<String>,
    /// Manually curated removals, e.g. frequent but meaningless words found
    /// by reviewing [`Corpus::top_frequent_words`].
    pub extra_blocklist: BTreeSet<String>,
    pub min_token_len: usize,
    pub lowercase: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: english_stopwords(),
            extra_blocklist: BTreeSet::new(),
            min_token_len: 1,
            lowercase: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_token_len < 1 {
            return Err(Error::Config("min_token_len must be at least 1".into()));
        }
        Ok(())
    }

    fn is_blocked(&self, token: &str) -> bool {
        if self.stopwords.contains(token) || self.extra_blocklist.contains(token) {
            return true;
        }
        if self.lowercase {
            return false;
        }
        let lower = token.to_lowercase();
        self.stopwords.contains(&lower) || self.extra_blocklist.contains(&lower)
    }
}

/// The bundled English stopword list.
pub fn english_stopwords() -> BTreeSet<String> {
    parse_word_list(ENGLISH_STOPWORDS)
}

/// Reads a stopword list: one word per line, UTF-8, blank lines and `#` comments ignored.
pub fn load_word_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

fn is_url_or_username(token: &str) -> bool {
    let probe = token.trim_start_matches(|c: char| !c.is_alphanumeric() && c != '@');
    probe.starts_with('@') || URL_PREFIXES.iter().any(|p| probe.starts_with(p))
}

/// Splits `text` into filtered tokens.
///
/// Whitespace split, URL and `@user` removal, punctuation trimmed from both
/// ends, then length and stopword filters.
pub fn tokenize(text: &str, cfg: &PreprocessConfig) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let folded = if cfg.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        if is_url_or_username(&folded.to_lowercase()) {
            continue;
        }
        let token = folded.trim_matches(|c: char| !c.is_alphanumeric());
        if token.is_empty() || token.chars().count() < cfg.min_token_len {
            continue;
        }
        if cfg.is_blocked(token) {
            continue;
        }
        out.push(token.to_string());
    }
    out
}

/// A collection of meme documents plus document-frequency statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<MemeDocument>,
    vocabulary: BTreeMap<String, u32>,
    doc_freq: BTreeMap<String, u32>,
    // word -> ascending indices of documents containing it
    postings: BTreeMap<String, Vec<u32>>,
}

impl Corpus {
    /// Builds a corpus from documents, rejecting duplicate ids. Existing
    /// token lists are kept and the statistics computed from them.
    pub fn from_documents(documents: Vec<MemeDocument>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        let mut corpus = Corpus {
            documents,
            vocabulary: BTreeMap::new(),
            doc_freq: BTreeMap::new(),
            postings: BTreeMap::new(),
        };
        corpus.recompute_statistics();
        Ok(corpus)
    }

    fn recompute_statistics(&mut self) {
        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (idx, doc) in self.documents.iter().enumerate() {
            let unique: BTreeSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for word in unique {
                postings.entry(word.to_string()).or_default().push(idx as u32);
            }
        }
        self.doc_freq = postings
            .iter()
            .map(|(w, docs)| (w.clone(), docs.len() as u32))
            .collect();
        self.vocabulary = postings
            .keys()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        self.postings = postings;
    }

    /// Re-derives every document's tokens from its raw caption and text.
    ///
    /// Idempotent: tokens are always rebuilt from the raw strings.
    pub fn preprocess(&self, cfg: &PreprocessConfig) -> Corpus {
        let documents = self
            .documents
            .iter()
            .map(|doc| MemeDocument {
                tokens: tokenize(&doc.raw_text(), cfg),
                ..doc.clone()
            })
            .collect();
        let mut corpus = Corpus {
            documents,
            vocabulary: BTreeMap::new(),
            doc_freq: BTreeMap::new(),
            postings: BTreeMap::new(),
        };
        corpus.recompute_statistics();
        corpus
    }

    pub fn documents(&self) -> &[MemeDocument] {
        &self.documents
    }

    pub fn total_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, u32> {
        &self.vocabulary
    }

    pub fn doc_freq(&self) -> &BTreeMap<String, u32> {
        &self.doc_freq
    }

    pub fn get(&self, id: &str) -> Option<&MemeDocument> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Map from document id to position, for bulk lookups.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.as_str(), i))
            .collect()
    }

    /// Number of documents containing `word`.
    pub fn document_count(&self, word: &str) -> u32 {
        self.doc_freq.get(word).copied().unwrap_or(0)
    }

    /// Number of documents containing both words.
    pub fn joint_document_count(&self, w1: &str, w2: &str) -> u32 {
        match (self.postings.get(w1), self.postings.get(w2)) {
            (Some(a), Some(b)) => intersection_size(a, b),
            _ => 0,
        }
    }

    /// The `k` words with the highest document frequency, ties broken lexicographically.
    pub fn top_frequent_words(&self, k: usize) -> Vec<(String, u32)> {
        let mut ranked: Vec<(String, u32)> = self.doc_freq.iter().map(|(w, c)| (w.clone(), *c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    /// Document-level unigram and pairwise co-occurrence counts for `words`.
    /// Words outside the vocabulary count zero.
    pub fn cooccurrence_counts<'a, I>(&self, words: I) -> CooccurrenceCounts
    where
        I: IntoIterator<Item = &'a str>,
    {
        let words: BTreeSet<&str> = words.into_iter().collect();
        let unigram: BTreeMap<String, u32> = words.iter().map(|w| (w.to_string(), self.document_count(w))).collect();
        let list: Vec<&str> = words.into_iter().collect();
        let mut pairs = BTreeMap::new();
        for (i, a) in list.iter().enumerate() {
            for b in &list[i + 1..] {
                let count = self.joint_document_count(a, b);
                if count > 0 {
                    pairs.insert((a.to_string(), b.to_string()), count);
                }
            }
        }
        CooccurrenceCounts {
            total_docs: self.total_docs() as u32,
            unigram,
            pairs,
        }
    }

    /// Writes one JSON object per document, tokens included.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for doc in &self.documents {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a corpus previously written by [`Corpus::write_jsonl`], keeping its tokens.
    pub fn read_processed(path: impl AsRef<Path>) -> Result<Corpus> {
        let path = path.as_ref();
        let documents = read_jsonl_lines(path, |line| serde_json::from_str::<MemeDocument>(line))?;
        Corpus::from_documents(documents)
    }
}

fn intersection_size(a: &[u32], b: &[u32]) -> u32 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Document co-occurrence statistics over a fixed word set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceCounts {
    pub total_docs: u32,
    pub unigram: BTreeMap<String, u32>,
    // keyed by (smaller, larger); zero counts omitted
    pairs: BTreeMap<(String, String), u32>,
}

impl CooccurrenceCounts {
    pub fn count(&self, word: &str) -> u32 {
        self.unigram.get(word).copied().unwrap_or(0)
    }

    /// Symmetric joint count. `pair(w, w)` is `count(w)`.
    pub fn pair(&self, w1: &str, w2: &str) -> u32 {
        if w1 == w2 {
            return self.count(w1);
        }
        let key = if w1 < w2 {
            (w1.to_string(), w2.to_string())
        } else {
            (w2.to_string(), w1.to_string())
        };
        self.pairs.get(&key).copied().unwrap_or(0)
    }
}

pub(crate) fn read_jsonl_lines<T, F>(path: &Path, mut parse: F) -> Result<Vec<T>>
where
    F: FnMut(&str) -> serde_json::Result<T>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Loads raw meme records. Tokens stay empty until [`Corpus::preprocess`].
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let records = match format {
        CorpusFormat::Jsonl => read_jsonl_lines(path, |line| serde_json::from_str::<RawRecord>(line))?,
        CorpusFormat::Csv => read_csv_records(path)?,
    };
    let documents = records
        .into_iter()
        .map(|r| MemeDocument::new(r.id, r.caption, r.text))
        .collect();
    Corpus::from_documents(documents)
}

fn read_csv_records(path: &Path) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for result in reader.deserialize::<RawRecord>() {
        match result {
            Ok(record) => out.push(record),
            Err(err) => {
                let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
                return Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line,
                    reason: err.to_string(),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        file
    }

    fn doc(id: &str, tokens: &[&str]) -> MemeDocument {
        MemeDocument {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            ..MemeDocument::new(id, "", "")
        }
    }

    #[test]
    fn loads_three_jsonl_records() {
        let file = write_tmp(
            "{\"id\":\"a\",\"caption\":\"x\",\"text\":\"y\"}\n\
             {\"id\":\"b\",\"caption\":\"x\",\"text\":\"y\"}\n\
             {\"id\":\"c\",\"caption\":\"x\",\"text\":\"y\"}\n",
            ".jsonl",
        );
        let corpus = load_corpus(file.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(corpus.total_docs(), 3);
        assert!(corpus.documents().iter().all(|d| d.tokens.is_empty()));
    }

    #[test]
    fn missing_text_field_names_line() {
        let file = write_tmp(
            "{\"id\":\"a\",\"caption\":\"x\",\"text\":\"y\"}\n{\"id\":\"b\",\"caption\":\"x\"}\n",
            ".jsonl",
        );
        match load_corpus(file.path(), CorpusFormat::Jsonl) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let file = write_tmp(
            "{\"id\":\"a\",\"caption\":\"x\",\"text\":\"y\"}\n{\"id\":\"a\",\"caption\":\"z\",\"text\":\"w\"}\n",
            ".jsonl",
        );
        match load_corpus(file.path(), CorpusFormat::Jsonl) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("expected duplicate id, got {other:?}"),
        }
    }

    #[test]
    fn loads_csv_and_reports_bad_row() {
        let good = write_tmp("id,caption,text\na,a cat,hello there\nb,\"a, dog\",woof\n", ".csv");
        let corpus = load_corpus(good.path(), CorpusFormat::Csv).unwrap();
        assert_eq!(corpus.total_docs(), 2);
        assert_eq!(corpus.documents()[1].caption, "a, dog");

        let bad = write_tmp("id,caption,text\na,x,y\nb,x\n", ".csv");
        match load_corpus(bad.path(), CorpusFormat::Csv) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn full_size_corpus_counts_every_record() {
        let mut body = String::new();
        for i in 0..2513 {
            body.push_str(&format!("{{\"id\":\"m{i}\",\"caption\":\"c\",\"text\":\"t\"}}\n"));
        }
        let file = write_tmp(&body, ".jsonl");
        assert_eq!(
            load_corpus(file.path(), CorpusFormat::Jsonl).unwrap().total_docs(),
            2513
        );
    }

    #[test]
    fn filters_urls_usernames_punctuation_and_stopwords() {
        let corpus =
            Corpus::from_documents(vec![MemeDocument::new("a", "a cat", "visit http://x.co @bob NOW!!")]).unwrap();
        let processed = corpus.preprocess(&PreprocessConfig::default());
        assert_eq!(processed.documents()[0].tokens, vec!["cat", "visit"]);
    }

    #[test]
    fn all_stopword_document_is_retained_empty() {
        let corpus = Corpus::from_documents(vec![
            MemeDocument::new("a", "the and of", "it is"),
            MemeDocument::new("b", "army", "tanks"),
        ])
        .unwrap();
        let processed = corpus.preprocess(&PreprocessConfig::default());
        assert_eq!(processed.total_docs(), 2);
        assert!(processed.documents()[0].tokens.is_empty());
    }

    #[test]
    fn extra_blocklist_removes_word_everywhere() {
        let corpus = Corpus::from_documents(vec![
            MemeDocument::new("a", "meme of a cat", "MEME"),
            MemeDocument::new("b", "dank meme", "lol"),
        ])
        .unwrap();
        let cfg = PreprocessConfig {
            extra_blocklist: ["meme".to_string()].into(),
            ..PreprocessConfig::default()
        };
        let processed = corpus.preprocess(&cfg);
        assert!(!processed.doc_freq().contains_key("meme"));
        assert!(!processed.vocabulary().contains_key("meme"));
        assert_eq!(processed.document_count("cat"), 1);
    }

    #[test]
    fn min_token_len_and_case_preservation() {
        let cfg = PreprocessConfig {
            min_token_len: 3,
            lowercase: false,
            ..PreprocessConfig::default()
        };
        assert_eq!(tokenize("Go THE Army ok", &cfg), vec!["Army"]);
        assert!(PreprocessConfig {
            min_token_len: 0,
            ..cfg
        }
        .validate()
        .is_err());
    }

    #[test]
    fn wrapped_urls_are_dropped() {
        let cfg = PreprocessConfig::default();
        assert_eq!(
            tokenize("(https://a.b/c) <www.x.org> \"@someone\" army", &cfg),
            vec!["army"]
        );
    }

    #[test]
    fn top_frequent_words_orders_by_count_then_word() {
        let mut docs = Vec::new();
        for i in 0..10 {
            let mut toks = vec!["army"];
            if i < 3 {
                toks.push("cat");
            }
            if i < 5 {
                toks.push("beta");
                toks.push("alpha");
            }
            docs.push(doc(&format!("d{i}"), &toks));
        }
        let corpus = Corpus::from_documents(docs).unwrap();
        let top: Vec<String> = corpus.top_frequent_words(4).into_iter().map(|(w, _)| w).collect();
        assert_eq!(top, vec!["army", "alpha", "beta", "cat"]);
        assert!(corpus.top_frequent_words(0).is_empty());
        assert_eq!(corpus.top_frequent_words(100).len(), 4);
    }

    #[test]
    fn cooccurrence_matches_enumeration() {
        let corpus = Corpus::from_documents(vec![
            doc("1", &["a", "b"]),
            doc("2", &["a"]),
            doc("3", &["b"]),
            doc("4", &["a", "b"]),
        ])
        .unwrap();
        let counts = corpus.cooccurrence_counts(["a", "b", "zzz"]);
        assert_eq!(counts.pair("a", "b"), 2);
        assert_eq!(counts.pair("b", "a"), 2);
        assert_eq!(counts.count("a"), 3);
        assert_eq!(counts.count("b"), 3);
        assert_eq!(counts.count("zzz"), 0);
        assert_eq!(counts.pair("a", "zzz"), 0);
    }

    #[test]
    fn saturated_and_disjoint_counts() {
        let corpus =
            Corpus::from_documents(vec![doc("1", &["w", "x"]), doc("2", &["w", "y"]), doc("3", &["w"])]).unwrap();
        let counts = corpus.cooccurrence_counts(["w", "x", "y"]);
        assert_eq!(counts.count("w"), 3);
        assert_eq!(counts.pair("x", "y"), 0);
    }

    #[test]
    fn processed_corpus_round_trips_through_jsonl() {
        let corpus = Corpus::from_documents(vec![
            MemeDocument::new("a", "soldiers marching", "BMT life"),
            MemeDocument::new("b", "a cat", ""),
        ])
        .unwrap()
        .preprocess(&PreprocessConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        corpus.write_jsonl(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert_eq!(Corpus::read_processed(&path).unwrap(), corpus);
        corpus.write_jsonl(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            "[a-zA-Z]{1,8}",
            "[A-Za-z]{1,5}[!?.,]{0,3}",
            Just("the".to_string()),
            Just("http://foo.bar".to_string()),
            Just("@user".to_string()),
            Just("--".to_string()),
            Just("Ünïcode".to_string()),
        ];
        proptest::collection::vec(piece, 0..12).prop_map(|v| v.join(" "))
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent_and_filtered(caption in text_strategy(), text in text_strategy()) {
            let cfg = PreprocessConfig::default();
            let corpus = Corpus::from_documents(vec![MemeDocument::new("x", caption.clone(), text.clone())]).unwrap();
            let once = corpus.preprocess(&cfg);
            let twice = once.preprocess(&cfg);
            prop_assert_eq!(&once, &twice);
            let folded = format!("{} {}", caption, text).to_lowercase();
            for token in &once.documents()[0].tokens {
                prop_assert!(!cfg.stopwords.contains(token));
                prop_assert!(!token.starts_with('@') && !token.starts_with("http"));
                prop_assert!(token.chars().any(char::is_alphanumeric));
                prop_assert!(folded.contains(token.as_str()));
            }
        }

        #[test]
        fn joint_count_bounded_by_marginals(
            docs in proptest::collection::vec(proptest::collection::btree_set(0u8..6, 0..5), 1..20)
        ) {
            let documents = docs.iter().enumerate().map(|(i, set)| MemeDocument {
                tokens: set.iter().map(|w| format!("w{w}")).collect(),
                ..MemeDocument::new(format!("d{i}"), "", "")
            }).collect();
            let corpus = Corpus::from_documents(documents).unwrap();
            let words: Vec<String> = (0..6).map(|w| format!("w{w}")).collect();
            let counts = corpus.cooccurrence_counts(words.iter().map(String::as_str));
            for a in &words {
                prop_assert!(counts.count(a) as usize <= corpus.total_docs());
                for b in &words {
                    prop_assert_eq!(counts.pair(a, b), counts.pair(b, a));
                    prop_assert!(counts.pair(a, b) <= counts.count(a).min(counts.count(b)));
                }
            }
            for (w, df) in corpus.doc_freq() {
                prop_assert!(*df >= 1 && (*df as usize) <= corpus.total_docs());
                prop_assert!(corpus.vocabulary().contains_key(w));
            }
        }
    }
}
