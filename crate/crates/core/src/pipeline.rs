//! Staged end-to-end runs, manifests and K sweeps.
//!
//! Every stage writes its artifact into the output directory, so a run can be
//! resumed stage by stage:
//!
//! | stage      | artifacts                         |
//! |------------|-----------------------------------|
//! | preprocess | `corpus.jsonl`                    |
//! | generate   | `assignments.jsonl`               |
//! | collapse   | `merge_log.jsonl`, `clusters.json`|
//! | represent  | `representations.json`            |
//! | evaluate   | `report.json`                     |
//!
//! A full run also writes `config.toml` (the resolved configuration) and
//! `manifest.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collapse::{collapse_pbm, collapse_wsm, CollapseMethod, CollapseState, CollapseSummary, WsmOptions};
use crate::collapse::{DEFAULT_WINDOW, WSM_TOP_WORDS};
use crate::corpus::{english_stopwords, load_corpus, load_word_list, Corpus, CorpusFormat, PreprocessConfig};
use crate::ctfidf::build_ctfidf_from_clusters;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, write_report, CoherenceReport, EvaluationOptions};
use crate::generation::{generate_topics, read_assignments, write_assignments, DemonstrationSet, GenerationSummary};
use crate::generation::{GenerationOutput, TopicAssignment};
use crate::llm::{BackendConfig, Gateway, GatewayStats};
use crate::representation::{read_representations, represent_all, write_representations};
use crate::representation::{RepresentationMethod, TopicRepresentation};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const ASSIGNMENTS_FILE: &str = "assignments.jsonl";
pub const MERGE_LOG_FILE: &str = "merge_log.jsonl";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const REPRESENTATIONS_FILE: &str = "representations.json";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    /// Guessed from the extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
}

fn default_true() -> bool {
    true
}
fn default_min_token_len() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    /// Replaces the bundled English list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords_path: Option<PathBuf>,
    /// One word per line, added to `extra_blocklist`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocklist_path: Option<PathBuf>,
    #[serde(default)]
    pub extra_blocklist: Vec<String>,
    #[serde(default = "default_min_token_len")]
    pub min_token_len: usize,
    #[serde(default = "default_true")]
    pub lowercase: bool,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            stopwords_path: None,
            blocklist_path: None,
            extra_blocklist: Vec::new(),
            min_token_len: 1,
            lowercase: true,
        }
    }
}

impl PreprocessSection {
    pub fn to_config(&self) -> Result<PreprocessConfig> {
        let stopwords = match &self.stopwords_path {
            Some(path) => load_word_list(path)?,
            None => english_stopwords(),
        };
        let mut extra_blocklist: std::collections::BTreeSet<String> =
            self.extra_blocklist.iter().map(|w| w.trim().to_lowercase()).collect();
        if let Some(path) = &self.blocklist_path {
            extra_blocklist.extend(load_word_list(path)?);
        }
        let cfg = PreprocessConfig {
            stopwords,
            extra_blocklist,
            min_token_len: self.min_token_len,
            lowercase: self.lowercase,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_demos() -> usize {
    8
}
fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    /// Uses the bundled demonstrations when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demonstrations_path: Option<PathBuf>,
    #[serde(default = "default_demos")]
    pub num_demonstrations: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            demonstrations_path: None,
            num_demonstrations: default_demos(),
            parallelism: default_parallelism(),
        }
    }
}

fn default_method() -> CollapseMethod {
    CollapseMethod::Wsm
}
fn default_k() -> usize {
    20
}
fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_top_words() -> usize {
    WSM_TOP_WORDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseSection {
    #[serde(default = "default_method")]
    pub method: CollapseMethod,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Candidate window M for prompt-based merging.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_top_words")]
    pub wsm_top_words: usize,
    #[serde(default = "default_true")]
    pub wsm_recompute: bool,
}

impl Default for CollapseSection {
    fn default() -> Self {
        CollapseSection {
            method: default_method(),
            k: default_k(),
            window: default_window(),
            wsm_top_words: default_top_words(),
            wsm_recompute: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationSection {
    #[serde(default)]
    pub method: RepresentationMethod,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

/// Full run configuration, loadable from TOML. Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub collapse: CollapseSection,
    #[serde(default)]
    pub representation: RepresentationSection,
    #[serde(default)]
    pub evaluation: EvaluationOptions,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn resolve_opt(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        resolve(base, p);
    }
}

impl RunConfig {
    /// A configuration with defaults everywhere except the corpus path.
    pub fn new(corpus_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            output_dir: output_dir.into(),
            corpus: CorpusSection {
                path: corpus_path.into(),
                format: None,
            },
            preprocess: PreprocessSection::default(),
            generation: GenerationSection::default(),
            backend: BackendConfig::default(),
            collapse: CollapseSection::default(),
            representation: RepresentationSection::default(),
            evaluation: EvaluationOptions::default(),
        }
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Makes every relative path absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        resolve(base, &mut self.corpus.path);
        resolve_opt(base, &mut self.preprocess.stopwords_path);
        resolve_opt(base, &mut self.preprocess.blocklist_path);
        resolve_opt(base, &mut self.generation.demonstrations_path);
        resolve_opt(base, &mut self.backend.cache_path);
        resolve_opt(base, &mut self.backend.mock_rules_path);
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.collapse;
        if c.k < 1 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if c.window < 2 {
            return Err(Error::Config("window M must be at least 2".into()));
        }
        if c.wsm_top_words < 1 {
            return Err(Error::Config("wsm_top_words must be at least 1".into()));
        }
        if self.generation.num_demonstrations < 1 {
            return Err(Error::Config("num_demonstrations must be at least 1".into()));
        }
        if self.generation.parallelism < 1 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        let eps = self.evaluation.epsilon;
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
        }
        if self.preprocess.min_token_len < 1 {
            return Err(Error::Config("min_token_len must be at least 1".into()));
        }
        Ok(())
    }

    pub fn corpus_format(&self) -> CorpusFormat {
        self.corpus
            .format
            .unwrap_or_else(|| CorpusFormat::from_path(&self.corpus.path))
    }

    /// `pbm` (prompted collapse + LLM words), `wsm` (word-similarity collapse
    /// + c-TF-IDF words), or `custom` for any other pairing.
    pub fn variant(&self) -> &'static str {
        match (self.collapse.method, self.representation.method) {
            (CollapseMethod::Pbm, RepresentationMethod::Llm) => "pbm",
            (CollapseMethod::Wsm, RepresentationMethod::Ctfidf) => "wsm",
            _ => "custom",
        }
    }

    /// SHA-256 over the path-free configuration and the contents of every
    /// input file. Identical inputs give identical digests on any machine.
    pub fn digest(&self) -> Result<String> {
        let mut stripped = self.clone();
        stripped.output_dir = PathBuf::new();
        stripped.corpus.path = PathBuf::new();
        stripped.corpus.format = Some(self.corpus_format());
        let inputs = [
            ("corpus", Some(&self.corpus.path)),
            ("stopwords", self.preprocess.stopwords_path.as_ref()),
            ("blocklist", self.preprocess.blocklist_path.as_ref()),
            ("demonstrations", self.generation.demonstrations_path.as_ref()),
            ("mock_rules", self.backend.mock_rules_path.as_ref()),
        ];
        let strip = |p: &mut Option<PathBuf>| {
            if p.is_some() {
                *p = Some(PathBuf::new());
            }
        };
        strip(&mut stripped.preprocess.stopwords_path);
        strip(&mut stripped.preprocess.blocklist_path);
        strip(&mut stripped.generation.demonstrations_path);
        strip(&mut stripped.backend.mock_rules_path);
        // the cache only changes how answers are obtained, not which ones
        strip(&mut stripped.backend.cache_path);

        let mut hasher = Sha256::new();
        hasher.update(b"config\0");
        hasher.update(serde_json::to_vec(&stripped)?);
        for (name, path) in inputs {
            hasher.update(name.as_bytes());
            hasher.update(b"\0");
            match path {
                Some(path) => {
                    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                    hasher.update(Sha256::digest(normalize_newlines(&bytes)));
                }
                None => hasher.update(b"bundled"),
            }
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

fn normalize_newlines(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\r' && bytes.get(i + 1) == Some(&b'\n') {
            i += 1;
            continue;
        }
        out.push(bytes[i]);
        i += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Preprocess,
    Generate,
    Collapse,
    Represent,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Preprocess => "preprocess",
            Stage::Generate => "generate",
            Stage::Collapse => "collapse",
            Stage::Represent => "represent",
            Stage::Evaluate => "evaluate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub llm: GatewayStats,
}

/// Size of one final cluster, counted both ways: distinct memes and
/// (meme, label) assignments folded into it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSize {
    pub documents: usize,
    pub assignments: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentationSummary {
    pub method: RepresentationMethod,
    pub topics: usize,
    pub fallbacks: usize,
    pub backfilled_words: usize,
    pub dropped_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub k: usize,
    pub mean_npmi: f64,
    pub diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub variant: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapse: Option<CollapseSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_sizes: Option<BTreeMap<String, ClusterSize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representation: Option<RepresentationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

impl Manifest {
    fn new(digest: String, variant: &str) -> Self {
        Manifest {
            config_digest: digest,
            variant: variant.to_string(),
            status: RunStatus::Ok,
            failed_stage: None,
            error: None,
            stages: Vec::new(),
            documents: None,
            generation: None,
            collapse: None,
            cluster_sizes: None,
            representation: None,
            metrics: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One configured run. Stage methods read their inputs as arguments and
/// write their artifacts to the output directory.
pub struct Pipeline {
    cfg: RunConfig,
    digest: String,
    out_dir: PathBuf,
    gateway: Option<Gateway>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let digest = cfg.digest()?;
        let out_dir = cfg.output_dir.clone();
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        Ok(Pipeline {
            cfg,
            digest,
            out_dir,
            gateway: None,
        })
    }

    /// Uses a prebuilt gateway instead of one built from the backend config.
    pub fn with_gateway(mut self, gateway: Gateway) -> Self {
        self.gateway = Some(gateway);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn output_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure_gateway(&mut self) -> Result<()> {
        if self.gateway.is_none() {
            self.gateway = Some(Gateway::from_config(&self.cfg.backend)?);
        }
        Ok(())
    }

    /// Traffic so far; zero before any LLM stage ran.
    pub fn llm_stats(&self) -> GatewayStats {
        self.gateway.as_ref().map(Gateway::stats).unwrap_or_default()
    }

    pub fn preprocess(&mut self) -> Result<Corpus> {
        let raw = load_corpus(&self.cfg.corpus.path, self.cfg.corpus_format())?;
        let corpus = raw.preprocess(&self.cfg.preprocess.to_config()?);
        corpus.write_jsonl(self.artifact(CORPUS_FILE))?;
        info!("preprocessed {} documents", corpus.total_docs());
        Ok(corpus)
    }

    pub fn demonstrations(&self) -> Result<DemonstrationSet> {
        let all = match &self.cfg.generation.demonstrations_path {
            Some(path) => DemonstrationSet::load(path)?,
            None => DemonstrationSet::bundled(),
        };
        all.take(self.cfg.generation.num_demonstrations)
    }

    pub fn generate(&mut self, corpus: &Corpus) -> Result<GenerationOutput> {
        let demos = self.demonstrations()?;
        self.ensure_gateway()?;
        let gateway = self.gateway.as_ref().expect("gateway");
        let out = generate_topics(corpus, &demos, gateway, self.cfg.generation.parallelism)?;
        write_assignments(self.artifact(ASSIGNMENTS_FILE), &out.assignments)?;
        info!(
            "generated topics: {} labelled, {} miscellaneous, {} inappropriate",
            out.summary.generated, out.summary.miscellaneous, out.summary.inappropriate
        );
        Ok(out)
    }

    pub fn collapse(&mut self, corpus: &Corpus, assignments: &[TopicAssignment]) -> Result<CollapseState> {
        let c = &self.cfg.collapse;
        let initial = CollapseState::from_assignments(assignments, c.k, c.window)?;
        let state = match c.method {
            CollapseMethod::Pbm => {
                self.ensure_gateway()?;
                collapse_pbm(initial, self.gateway.as_ref().expect("gateway"))?
            }
            CollapseMethod::Wsm => {
                let opts = WsmOptions {
                    top_words: c.wsm_top_words,
                    recompute: c.wsm_recompute,
                    include_reserved: false,
                };
                collapse_wsm(initial, corpus, &opts)?
            }
        };
        state.write_merge_log(self.artifact(MERGE_LOG_FILE))?;
        write_json(&self.artifact(CLUSTERS_FILE), &state.clusters())?;
        info!("collapsed to {} topics", state.topic_count());
        Ok(state)
    }

    pub fn represent(
        &mut self,
        corpus: &Corpus,
        clusters: &BTreeMap<String, Vec<String>>,
    ) -> Result<Vec<TopicRepresentation>> {
        let table = build_ctfidf_from_clusters(clusters, corpus, false)?;
        let method = self.cfg.representation.method;
        if method == RepresentationMethod::Llm {
            self.ensure_gateway()?;
        }
        let reps = represent_all(&table, method, self.gateway.as_ref())?;
        write_representations(self.artifact(REPRESENTATIONS_FILE), &reps)?;
        Ok(reps)
    }

    pub fn evaluate(&self, corpus: &Corpus, reps: &[TopicRepresentation]) -> Result<CoherenceReport> {
        let mut report = evaluate(reps, corpus, &self.cfg.evaluation)?;
        report.config_digest = self.digest.clone();
        write_report(self.artifact(REPORT_FILE), &report)?;
        Ok(report)
    }

    pub fn load_corpus_artifact(&self) -> Result<Corpus> {
        Corpus::read_processed(self.artifact(CORPUS_FILE))
    }

    pub fn load_assignments_artifact(&self) -> Result<Vec<TopicAssignment>> {
        read_assignments(self.artifact(ASSIGNMENTS_FILE))
    }

    pub fn load_clusters_artifact(&self) -> Result<BTreeMap<String, Vec<String>>> {
        read_json(&self.artifact(CLUSTERS_FILE))
    }

    pub fn load_representations_artifact(&self) -> Result<Vec<TopicRepresentation>> {
        read_representations(self.artifact(REPRESENTATIONS_FILE))
    }

    pub fn write_config(&self) -> Result<()> {
        let path = self.artifact(CONFIG_FILE);
        std::fs::write(&path, self.cfg.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    /// Runs every stage in order and writes the manifest, also on failure.
    /// A failed stage comes back as [`Error::Stage`]; its predecessors'
    /// artifacts stay on disk.
    pub fn run(&mut self) -> Result<RunOutput> {
        let mut manifest = Manifest::new(self.digest.clone(), self.cfg.variant());
        self.write_config()?;
        let result = self.run_stages(&mut manifest, None);
        self.finish(manifest, result)
    }

    fn finish(
        &self,
        mut manifest: Manifest,
        result: std::result::Result<CoherenceReport, (Stage, Error)>,
    ) -> Result<RunOutput> {
        match result {
            Ok(report) => {
                write_json(&self.artifact(MANIFEST_FILE), &manifest)?;
                Ok(RunOutput { manifest, report })
            }
            Err((stage, err)) => {
                manifest.status = RunStatus::Failed;
                manifest.failed_stage = Some(stage);
                manifest.error = Some(err.to_string());
                write_json(&self.artifact(MANIFEST_FILE), &manifest)?;
                Err(Error::Stage {
                    stage: stage.to_string(),
                    source: Box::new(err),
                })
            }
        }
    }

    fn tracked<T>(
        &mut self,
        manifest: &mut Manifest,
        stage: Stage,
        f: impl FnOnce(&mut Self) -> Result<T>,
    ) -> std::result::Result<T, (Stage, Error)> {
        let before = self.llm_stats();
        let out = f(self).map_err(|e| (stage, e))?;
        manifest.stages.push(StageRecord {
            stage,
            llm: self.llm_stats().since(&before),
        });
        Ok(out)
    }

    /// With `shared`, preprocessing and generation are skipped and the given
    /// corpus and generation output are used instead.
    fn run_stages(
        &mut self,
        manifest: &mut Manifest,
        shared: Option<(&Corpus, &GenerationOutput)>,
    ) -> std::result::Result<CoherenceReport, (Stage, Error)> {
        let owned;
        let (corpus, generation) = match shared {
            Some(pair) => pair,
            None => {
                let corpus = self.tracked(manifest, Stage::Preprocess, |p| p.preprocess())?;
                let generation = self.tracked(manifest, Stage::Generate, |p| p.generate(&corpus))?;
                owned = (corpus, generation);
                (&owned.0, &owned.1)
            }
        };
        manifest.documents = Some(corpus.total_docs());
        manifest.generation = Some(generation.summary.clone());

        let state = self.tracked(manifest, Stage::Collapse, |p| {
            p.collapse(corpus, &generation.assignments)
        })?;
        manifest.collapse = Some(state.summary());
        let mut sizes = BTreeMap::new();
        for cluster in state
            .ranked()
            .into_iter()
            .chain([state.miscellaneous(), state.inappropriate()])
            .filter(|c| c.freq() > 0)
        {
            sizes.insert(
                cluster.label.clone(),
                ClusterSize {
                    documents: cluster.freq(),
                    assignments: cluster.members.values().map(|&n| u64::from(n)).sum(),
                },
            );
        }
        manifest.cluster_sizes = Some(sizes);

        let clusters = state.clusters();
        let reps = self.tracked(manifest, Stage::Represent, |p| p.represent(corpus, &clusters))?;
        manifest.representation = Some(RepresentationSummary {
            method: self.cfg.representation.method,
            topics: reps.len(),
            fallbacks: reps.iter().filter(|r| r.fallback).count(),
            backfilled_words: reps.iter().map(|r| r.backfilled).sum(),
            dropped_words: reps.iter().map(|r| r.dropped.len()).sum(),
        });

        let report = self.tracked(manifest, Stage::Evaluate, |p| p.evaluate(corpus, &reps))?;
        manifest.metrics = Some(Metrics {
            k: report.k,
            mean_npmi: report.mean_npmi,
            diversity: report.diversity,
        });
        Ok(report)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub report: CoherenceReport,
}

/// Convenience wrapper around [`Pipeline::run`].
pub fn run_pipeline(cfg: RunConfig) -> Result<RunOutput> {
    Pipeline::new(cfg)?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_npmi: Option<f64>,
    pub diversity: Option<f64>,
    pub topics: Option<usize>,
    pub status: String,
}

/// Runs collapse, representation and evaluation once per K on a single
/// generation pass. Each K gets its own subdirectory `k{K}`; a failing K is
/// recorded in its row and the sweep moves on. Writes `sweep.csv`.
pub fn sweep(cfg: RunConfig, k_values: &[usize]) -> Result<Vec<SweepRow>> {
    sweep_with(Pipeline::new(cfg)?, k_values)
}

/// Like [`sweep`] with an already configured pipeline.
pub fn sweep_with(mut pipeline: Pipeline, k_values: &[usize]) -> Result<Vec<SweepRow>> {
    if k_values.is_empty() {
        return Err(Error::Config("sweep needs at least one K".into()));
    }
    pipeline.write_config()?;
    let mut shared = Manifest::new(pipeline.digest.clone(), pipeline.cfg.variant());
    let corpus = pipeline
        .tracked(&mut shared, Stage::Preprocess, |p| p.preprocess())
        .map_err(stage_error)?;
    let generation = pipeline
        .tracked(&mut shared, Stage::Generate, |p| p.generate(&corpus))
        .map_err(stage_error)?;

    let root = pipeline.out_dir.clone();
    let base_cfg = pipeline.cfg.clone();
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let mut cfg = base_cfg.clone();
        cfg.collapse.k = k;
        cfg.output_dir = root.join(format!("k{k}"));
        let row = match sweep_point(&mut pipeline, cfg, &shared, &corpus, &generation) {
            Ok(report) => SweepRow {
                k,
                mean_npmi: Some(report.mean_npmi),
                diversity: Some(report.diversity),
                topics: Some(report.k),
                status: "ok".into(),
            },
            Err(err) => SweepRow {
                k,
                mean_npmi: None,
                diversity: None,
                topics: None,
                status: format!("failed: {err}"),
            },
        };
        rows.push(row);
    }
    pipeline.cfg = base_cfg;
    pipeline.out_dir = root;

    let path = pipeline.artifact(SWEEP_FILE);
    let mut writer = csv::Writer::from_writer(File::create(&path).map_err(|e| Error::io(&path, e))?);
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

fn stage_error((stage, err): (Stage, Error)) -> Error {
    Error::Stage {
        stage: stage.to_string(),
        source: Box::new(err),
    }
}

fn sweep_point(
    pipeline: &mut Pipeline,
    cfg: RunConfig,
    shared: &Manifest,
    corpus: &Corpus,
    generation: &GenerationOutput,
) -> Result<CoherenceReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    pipeline.digest = cfg.digest()?;
    pipeline.out_dir = cfg.output_dir.clone();
    pipeline.cfg = cfg;
    pipeline.write_config()?;
    let mut manifest = Manifest::new(pipeline.digest.clone(), pipeline.cfg.variant());
    manifest.stages = shared.stages.clone();
    let result = pipeline.run_stages(&mut manifest, Some((corpus, generation)));
    pipeline.finish(manifest, result).map(|out| out.report)
}
