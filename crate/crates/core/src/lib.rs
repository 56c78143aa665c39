//! Topic modeling for multimodal meme corpora driven by a chat-completion LLM.
//!
//! A meme is flattened to its image caption and its superimposed text. The
//! pipeline asks an LLM for per-meme topic labels, collapses the resulting
//! label set down to `K` topics (by prompting, or by merging clusters whose
//! top c-TF-IDF words overlap), picks ten representative words per topic,
//! and scores the result with NPMI coherence and topic diversity.
//!
//! Stages, in order:
//!
//! - [`corpus`]: ingestion and preprocessing of caption/text records
//! - [`generation`]: per-meme topic prompts and reply parsing
//! - [`collapse`]: prompt-based and word-similarity topic merging
//! - [`ctfidf`]: class-based TF-IDF over topic clusters
//! - [`representation`]: ten-word topic representations
//! - [`evaluation`]: NPMI coherence and topic diversity
//! - [`pipeline`]: staged end-to-end runs, manifests and K sweeps
//!
//! All LLM traffic goes through [`llm::Gateway`], which fronts a live HTTP
//! backend, a scripted mock, or a record/replay cache.

pub mod collapse;
pub mod corpus;
pub mod ctfidf;
pub mod error;
pub mod evaluation;
pub mod generation;
pub mod llm;
pub mod pipeline;
pub mod representation;

pub use error::{Error, Result};

/// Reserved cluster for memes the LLM could not label and topics that failed to merge.
pub const MISCELLANEOUS: &str = "Miscellaneous";
/// Reserved cluster for memes blocked by the backend's content moderation.
pub const INAPPROPRIATE: &str = "Inappropriate";

/// Returns true if `label` names one of the reserved clusters (case-insensitive).
pub fn is_reserved_label(label: &str) -> bool {
    let label = label.trim();
    label.eq_ignore_ascii_case(MISCELLANEOUS) || label.eq_ignore_ascii_case(INAPPROPRIATE)
}

/// Canonical identity of a topic label. Labels compare case-insensitively.
pub fn label_key(label: &str) -> String {
    label.trim().to_lowercase()
}
