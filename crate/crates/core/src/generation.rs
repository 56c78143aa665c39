//! Per-meme topic generation.
//!
//! Each meme becomes one few-shot chat exchange: a fixed system instruction,
//! `n` demonstration pairs, then the meme's caption and superimposed text.
//! Replies are parsed as a quoted list of labels. Memes the model refuses go
//! to the Inappropriate cluster; unparseable replies and exhausted transport
//! retries go to Miscellaneous.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl_lines, Corpus, MemeDocument};
use crate::error::{Error, Result};
use crate::llm::{format_quoted_list, ChatExchange, Gateway, GatewayStats, LlmOutcome, OutcomeStatus};
use crate::{label_key, INAPPROPRIATE, MISCELLANEOUS};

pub const GENERATION_SYSTEM: &str = "You are designated as an assistant that identify and extract high-level topics from memes. You should avoid giving specific details and provide unique topics solely.";

pub const GENERATION_INSTRUCTION: &str =
    "Please list the high-level topics in the following meme using its image caption and superimposed text.";

const BUNDLED_DEMONSTRATIONS: &str = include_str!("../data/demonstrations_v1.json");

/// Suffix applied when the model returns one of the reserved labels.
pub const RESERVED_COLLISION_SUFFIX: &str = " (generated)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub caption: String,
    #[serde(alias = "overlay_text")]
    pub text: String,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemonstrationSet {
    items: Vec<Demonstration>,
}

impl DemonstrationSet {
    pub fn new(items: Vec<Demonstration>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Config("at least one demonstration is required".into()));
        }
        if let Some(bad) = items.iter().find(|d| d.topics.iter().all(|t| t.trim().is_empty())) {
            return Err(Error::Config(format!("demonstration `{}` has no topics", bad.caption)));
        }
        Ok(DemonstrationSet { items })
    }

    /// The eight demonstrations shipped with the crate.
    pub fn bundled() -> Self {
        let items: Vec<Demonstration> =
            serde_json::from_str(BUNDLED_DEMONSTRATIONS).expect("bundled demonstrations parse");
        DemonstrationSet::new(items).expect("bundled demonstrations are valid")
    }

    /// Reads a JSON list of `{caption, text, topics}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(serde_json::from_str(&text)?)
    }

    /// The first `n` demonstrations.
    pub fn take(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.items.len() {
            return Err(Error::Config(format!(
                "requested {n} demonstrations but {} are available",
                self.items.len()
            )));
        }
        Self::new(self.items[..n].to_vec())
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[Demonstration] {
        &self.items
    }
}

fn generation_user_turn(caption: &str, text: &str) -> String {
    format!("{GENERATION_INSTRUCTION}\nMeme's Image Caption: {caption}\nMeme's Superimposed Text: {text}\nTopics:")
}

/// Few-shot topic prompt for one meme. The meme's raw caption and text are used, not its tokens.
pub fn build_generation_prompt(doc: &MemeDocument, demos: &DemonstrationSet) -> ChatExchange {
    let exchange = demos
        .items
        .iter()
        .fold(ChatExchange::new(GENERATION_SYSTEM), |ex, demo| {
            ex.demonstration(
                generation_user_turn(&demo.caption, &demo.text),
                format_quoted_list(&demo.topics),
            )
        });
    exchange.query(generation_user_turn(&doc.caption, &doc.overlay_text))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopicParseError {
    NoList,
    Unbalanced,
    Empty,
}

impl fmt::Display for TopicParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopicParseError::NoList => "reply contains no bracketed list",
            TopicParseError::Unbalanced => "reply has unbalanced brackets",
            TopicParseError::Empty => "reply list is empty",
        })
    }
}

impl std::error::Error for TopicParseError {}

fn quote_family(c: char) -> Option<u8> {
    match c {
        '\'' | '\u{2018}' | '\u{2019}' => Some(1),
        '"' | '\u{201C}' | '\u{201D}' => Some(2),
        _ => None,
    }
}

fn split_list_items(inner: &str) -> Vec<String> {
    let chars: Vec<char> = inner.chars().collect();
    let mut items = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == ',' {
            i += 1;
            continue;
        }
        if let Some(family) = quote_family(c) {
            // A closing quote is one followed by optional whitespace and then `,` or the end,
            // so apostrophes inside a label survive.
            let mut item = String::new();
            let mut j = i + 1;
            let mut closed = false;
            while j < chars.len() {
                let cj = chars[j];
                if cj == '\\' && j + 1 < chars.len() {
                    item.push(chars[j + 1]);
                    j += 2;
                    continue;
                }
                if quote_family(cj) == Some(family) {
                    let mut k = j + 1;
                    while k < chars.len() && chars[k].is_whitespace() {
                        k += 1;
                    }
                    if k == chars.len() || chars[k] == ',' {
                        closed = true;
                        i = k;
                        break;
                    }
                }
                item.push(cj);
                j += 1;
            }
            if !closed {
                i = chars.len();
            }
            items.push(item);
        } else {
            let start = i;
            while i < chars.len() && chars[i] != ',' {
                i += 1;
            }
            let item: String = chars[start..i].iter().collect();
            items.push(item.trim_matches(|c: char| quote_family(c).is_some()).to_string());
        }
    }
    items
}

/// Parses replies such as `['Politics', 'Financial Crisis']`.
///
/// Whitespace and quote style are tolerated, labels are trimmed, and
/// duplicates are dropped case-insensitively keeping the first spelling.
pub fn parse_topic_list(reply: &str) -> std::result::Result<Vec<String>, TopicParseError> {
    let open = reply.find('[').ok_or(TopicParseError::NoList)?;
    let close = reply.rfind(']').ok_or(TopicParseError::Unbalanced)?;
    if close < open {
        return Err(TopicParseError::Unbalanced);
    }
    let inner = &reply[open + 1..close];
    if inner.contains('[') || inner.contains(']') {
        return Err(TopicParseError::Unbalanced);
    }
    let mut seen = HashSet::new();
    let labels: Vec<String> = split_list_items(inner)
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .filter(|s| seen.insert(label_key(s)))
        .collect();
    if labels.is_empty() {
        return Err(TopicParseError::Empty);
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Generated,
    Miscellaneous,
    Inappropriate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub doc_id: String,
    pub topics: Vec<String>,
    pub provenance: Provenance,
}

impl TopicAssignment {
    pub fn generated(doc_id: impl Into<String>, topics: Vec<String>) -> Self {
        TopicAssignment {
            doc_id: doc_id.into(),
            topics,
            provenance: Provenance::Generated,
        }
    }

    pub fn miscellaneous(doc_id: impl Into<String>) -> Self {
        TopicAssignment {
            doc_id: doc_id.into(),
            topics: vec![MISCELLANEOUS.to_string()],
            provenance: Provenance::Miscellaneous,
        }
    }

    pub fn inappropriate(doc_id: impl Into<String>) -> Self {
        TopicAssignment {
            doc_id: doc_id.into(),
            topics: vec![INAPPROPRIATE.to_string()],
            provenance: Provenance::Inappropriate,
        }
    }
}

/// Rewrites reserved labels the model produced and re-deduplicates.
fn sanitize_generated(labels: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    labels
        .into_iter()
        .map(|label| {
            let key = label_key(&label);
            if key == label_key(MISCELLANEOUS) {
                format!("{MISCELLANEOUS}{RESERVED_COLLISION_SUFFIX}")
            } else if key == label_key(INAPPROPRIATE) {
                format!("{INAPPROPRIATE}{RESERVED_COLLISION_SUFFIX}")
            } else {
                label
            }
        })
        .filter(|l| seen.insert(label_key(l)))
        .collect()
}

/// Maps one backend outcome to an assignment.
pub fn route_outcome(doc_id: &str, outcome: &LlmOutcome) -> (TopicAssignment, Option<TopicParseError>) {
    match outcome.status {
        OutcomeStatus::Refused => (TopicAssignment::inappropriate(doc_id), None),
        OutcomeStatus::Ok => match parse_topic_list(&outcome.text) {
            Ok(labels) => (TopicAssignment::generated(doc_id, sanitize_generated(labels)), None),
            Err(err) => (TopicAssignment::miscellaneous(doc_id), Some(err)),
        },
        OutcomeStatus::Unparseable | OutcomeStatus::TransportError => (TopicAssignment::miscellaneous(doc_id), None),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub documents: usize,
    pub generated: usize,
    pub miscellaneous: usize,
    pub inappropriate: usize,
    /// Miscellaneous memes whose reply was not a parseable list.
    pub parse_failures: usize,
    /// Miscellaneous memes whose request never succeeded.
    pub transport_failures: usize,
    pub demonstrations: usize,
    pub llm: GatewayStats,
}

#[derive(Debug, Clone)]
pub struct GenerationOutput {
    pub assignments: Vec<TopicAssignment>,
    pub summary: GenerationSummary,
}

type RoutedReply = (TopicAssignment, LlmOutcome, Option<TopicParseError>);

/// Prompts for every document and routes failures. The output keeps corpus order.
///
/// `parallelism` bounds concurrent requests; the gateway's rate limiter still applies.
/// The only error is one the gateway itself raises, e.g. a replay miss.
pub fn generate_topics(
    corpus: &Corpus,
    demos: &DemonstrationSet,
    gateway: &Gateway,
    parallelism: usize,
) -> Result<GenerationOutput> {
    let docs = corpus.documents();
    let before = gateway.stats();
    let slots: Mutex<Vec<Option<RoutedReply>>> = Mutex::new(vec![None; docs.len()]);
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);

    let worker = || loop {
        if failure.lock().expect("failure lock").is_some() {
            return;
        }
        let idx = next.fetch_add(1, Ordering::SeqCst);
        let Some(doc) = docs.get(idx) else { return };
        let exchange = build_generation_prompt(doc, demos);
        match gateway.complete(&exchange) {
            Ok(outcome) => {
                let (assignment, parse_err) = route_outcome(&doc.id, &outcome);
                if let Some(err) = &parse_err {
                    debug!("{}: {err}: {:?}", doc.id, outcome.text);
                }
                slots.lock().expect("slots lock")[idx] = Some((assignment, outcome, parse_err));
            }
            Err(err) => {
                failure.lock().expect("failure lock").get_or_insert(err);
                return;
            }
        }
    };

    let workers = parallelism.clamp(1, docs.len().max(1));
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(worker);
            }
        });
    }
    if let Some(err) = failure.into_inner().expect("failure lock") {
        return Err(err);
    }

    let mut summary = GenerationSummary {
        documents: docs.len(),
        demonstrations: demos.n(),
        ..GenerationSummary::default()
    };
    let mut assignments = Vec::with_capacity(docs.len());
    for slot in slots.into_inner().expect("slots lock") {
        let (assignment, outcome, parse_err) = slot.expect("every document answered");
        match assignment.provenance {
            Provenance::Generated => summary.generated += 1,
            Provenance::Inappropriate => summary.inappropriate += 1,
            Provenance::Miscellaneous => {
                summary.miscellaneous += 1;
                if parse_err.is_some() || outcome.status == OutcomeStatus::Unparseable {
                    summary.parse_failures += 1;
                } else {
                    summary.transport_failures += 1;
                }
            }
        }
        assignments.push(assignment);
    }
    summary.llm = gateway.stats().since(&before);
    info!(
        "generated topics for {} memes: {} generated, {} miscellaneous, {} inappropriate",
        summary.documents, summary.generated, summary.miscellaneous, summary.inappropriate
    );
    Ok(GenerationOutput { assignments, summary })
}

pub fn write_assignments(path: impl AsRef<Path>, assignments: &[TopicAssignment]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for a in assignments {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_assignments(path: impl AsRef<Path>) -> Result<Vec<TopicAssignment>> {
    read_jsonl_lines(path.as_ref(), |line| serde_json::from_str::<TopicAssignment>(line))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockAction, MockBackend, MockRule};

    fn corpus(n: usize) -> Corpus {
        let docs = (0..n)
            .map(|i| MemeDocument::new(format!("d{i}"), format!("caption {i}"), format!("text {i}")))
            .collect();
        Corpus::from_documents(docs).unwrap()
    }

    #[test]
    fn prompt_layout_matches_few_shot_format() {
        let demos = DemonstrationSet::bundled();
        assert_eq!(demos.n(), 8);
        let doc = MemeDocument::new("x", "a man in a car", "BMT spec: IT'S the LAW.");
        let ex = build_generation_prompt(&doc, &demos);
        assert_eq!(ex.turns.len(), 16);
        assert_eq!(ex.system, GENERATION_SYSTEM);
        assert_eq!(
            ex.turns[0].content,
            "Please list the high-level topics in the following meme using its image caption and superimposed text.\n\
             Meme's Image Caption: president obama in front of the white house\n\
             Meme's Superimposed Text: i did not divide the country the republican decision to obstruct every single thing i proposed to help us dig out of the financial crisis they caused divided the country\n\
             Topics:"
        );
        assert_eq!(ex.turns[1].content, "['Politics', 'Financial Crisis']");
        assert!(ex.query.ends_with(
            "Meme's Image Caption: a man in a car\nMeme's Superimposed Text: BMT spec: IT'S the LAW.\nTopics:"
        ));
        assert!(ex.validate().is_ok());
    }

    #[test]
    fn one_demo_and_empty_overlay() {
        let demos = DemonstrationSet::bundled().take(1).unwrap();
        let ex = build_generation_prompt(&MemeDocument::new("x", "a cat", ""), &demos);
        assert_eq!(ex.turns.len(), 2);
        assert!(ex.query.contains("Meme's Superimposed Text: \nTopics:"));
        assert!(DemonstrationSet::bundled().take(0).is_err());
        assert!(DemonstrationSet::bundled().take(9).is_err());
    }

    #[test]
    fn demonstrations_need_topics() {
        let bad = Demonstration {
            caption: "c".into(),
            text: "t".into(),
            topics: vec![" ".into()],
        };
        assert!(DemonstrationSet::new(vec![bad]).is_err());
        assert!(DemonstrationSet::new(vec![]).is_err());
    }

    #[test]
    fn parses_list_replies() {
        assert_eq!(parse_topic_list("['Military']").unwrap(), ["Military"]);
        assert_eq!(
            parse_topic_list("['politics', 'Politics', 'War']").unwrap(),
            ["politics", "War"]
        );
        assert_eq!(
            parse_topic_list("  [ \"Covid-19\" ,'Healthcare' ]  ").unwrap(),
            ["Covid-19", "Healthcare"]
        );
        assert_eq!(
            parse_topic_list("Topics: [Politics, Finance]").unwrap(),
            ["Politics", "Finance"]
        );
        assert_eq!(
            parse_topic_list("['Women's Rights', 'Feminism']").unwrap(),
            ["Women's Rights", "Feminism"]
        );
        assert_eq!(parse_topic_list("[\u{2018}Racism\u{2019}]").unwrap(), ["Racism"]);
        assert_eq!(
            parse_topic_list("['It\\'s Complicated']").unwrap(),
            ["It's Complicated"]
        );
    }

    #[test]
    fn rejects_non_lists() {
        assert_eq!(parse_topic_list("[]"), Err(TopicParseError::Empty));
        assert_eq!(parse_topic_list("[' ', '']"), Err(TopicParseError::Empty));
        assert_eq!(
            parse_topic_list("This meme is about politics."),
            Err(TopicParseError::NoList)
        );
        assert_eq!(parse_topic_list("['Politics'"), Err(TopicParseError::Unbalanced));
        assert_eq!(parse_topic_list("] backwards ["), Err(TopicParseError::Unbalanced));
        assert_eq!(parse_topic_list("[['a']]"), Err(TopicParseError::Unbalanced));
    }

    #[test]
    fn reserved_labels_are_rewritten() {
        let outcome = LlmOutcome::ok("['Miscellaneous', 'inappropriate', 'War']", Default::default());
        let (a, _) = route_outcome("d", &outcome);
        assert_eq!(a.provenance, Provenance::Generated);
        assert_eq!(
            a.topics,
            ["Miscellaneous (generated)", "Inappropriate (generated)", "War"]
        );
        assert!(a.topics.iter().all(|t| !crate::is_reserved_label(t)));
    }

    #[test]
    fn generation_routes_every_failure() {
        let backend = MockBackend::from_rules(vec![
            MockRule::contains("caption 1\n", MockAction::Refuse),
            MockRule::contains("caption 2\n", MockAction::Reply("Sure! It is about politics.".into())),
            MockRule::contains("caption 3\n", MockAction::TransportError),
            MockRule::contains("", MockAction::Reply("['Politics']".into())),
        ]);
        let gateway = Gateway::new(backend, "mock");
        let out = generate_topics(&corpus(5), &DemonstrationSet::bundled(), &gateway, 1).unwrap();
        let prov: Vec<Provenance> = out.assignments.iter().map(|a| a.provenance).collect();
        assert_eq!(
            prov,
            [
                Provenance::Generated,
                Provenance::Inappropriate,
                Provenance::Miscellaneous,
                Provenance::Miscellaneous,
                Provenance::Generated
            ]
        );
        assert_eq!(out.summary.generated, 2);
        assert_eq!(out.summary.miscellaneous, 2);
        assert_eq!(out.summary.parse_failures, 1);
        assert_eq!(out.summary.transport_failures, 1);
        assert_eq!(out.summary.inappropriate, 1);
        assert_eq!(out.summary.llm.calls, 5);
    }

    #[test]
    fn parallel_generation_matches_sequential() {
        let backend = MockBackend::from_rules(vec![
            MockRule::regex(r"caption \d*[02468]\n", MockAction::Reply("['Even']".into())).unwrap(),
            MockRule::contains("", MockAction::Reply("['Odd', 'Number']".into())),
        ]);
        let gateway = Gateway::new(backend, "mock");
        let c = corpus(37);
        let seq = generate_topics(&c, &DemonstrationSet::bundled(), &gateway, 1).unwrap();
        let par = generate_topics(&c, &DemonstrationSet::bundled(), &gateway, 6).unwrap();
        assert_eq!(seq.assignments, par.assignments);
        assert_eq!(seq.assignments.len(), 37);
        assert_eq!(seq.assignments[4].topics, ["Even"]);
    }

    #[test]
    fn assignments_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let list = vec![
            TopicAssignment::generated("a", vec!["Politics".into(), "War".into()]),
            TopicAssignment::miscellaneous("b"),
            TopicAssignment::inappropriate("c"),
        ];
        write_assignments(&path, &list).unwrap();
        assert_eq!(read_assignments(&path).unwrap(), list);
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.starts_with(r#"{"doc_id":"a","topics":["Politics","War"],"provenance":"generated"}"#));
    }
}
