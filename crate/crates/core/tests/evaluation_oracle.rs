mod common;

use proptest::prelude::*;

use memetopic::evaluation::{coherence, npmi_pair, DEFAULT_EPSILON};

use common::*;

fn docs_from(raw: &[Vec<u8>]) -> Vec<Vec<String>> {
    raw.iter()
        .map(|d| d.iter().map(|w| format!("w{w}")).collect())
        .collect()
}

proptest! {
    #[test]
    fn unrelated_document_only_changes_n(
        raw in proptest::collection::vec(proptest::collection::vec(0u8..8, 1..6), 1..30),
        a in 0u8..8,
        b in 0u8..8,
    ) {
        let mut docs = docs_from(&raw);
        let (wa, wb) = (format!("w{a}"), format!("w{b}"));
        let before = npmi_pair(&wa, &wb, &tokenized_corpus(&docs), DEFAULT_EPSILON).unwrap();
        prop_assert!((before - brute_npmi(&docs, &wa, &wb, DEFAULT_EPSILON)).abs() <= 1e-12);

        docs.push(vec!["unrelated".to_string()]);
        let after = npmi_pair(&wa, &wb, &tokenized_corpus(&docs), DEFAULT_EPSILON).unwrap();
        prop_assert!((after - brute_npmi(&docs, &wa, &wb, DEFAULT_EPSILON)).abs() <= 1e-12);
    }

    #[test]
    fn coherence_matches_brute_force(
        raw in proptest::collection::vec(proptest::collection::vec(0u8..30, 1..10), 2..50),
        topics in proptest::collection::vec(proptest::collection::btree_set(0u8..32, 2..10), 1..5),
    ) {
        let docs = docs_from(&raw);
        let reps: Vec<_> = topics
            .iter()
            .enumerate()
            .map(|(i, ws)| rep(&format!("t{i}"), &ws.iter().map(|w| format!("w{w}")).collect::<Vec<_>>()))
            .collect();
        let coh = coherence(&reps, &tokenized_corpus(&docs), DEFAULT_EPSILON).unwrap();
        let mut sum = 0.0;
        for r in &reps {
            let expected = brute_topic_npmi(&docs, &r.words, DEFAULT_EPSILON);
            prop_assert!((coh.per_topic[&r.topic] - expected).abs() <= 1e-9);
            sum += expected;
        }
        prop_assert!((coh.mean_npmi - sum / reps.len() as f64).abs() <= 1e-9);
    }
}
