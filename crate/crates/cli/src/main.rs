use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use memetopic::collapse::CollapseMethod;
use memetopic::corpus::CorpusFormat;
use memetopic::llm::BackendKind;
use memetopic::pipeline::{sweep_with, Pipeline, RunConfig, RunStatus};
use memetopic::representation::RepresentationMethod;

#[derive(Parser)]
#[command(name = "memetopic", version, about = "LLM-prompted topic modeling for meme corpora")]
struct Cli {
    #[command(flatten)]
    opts: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize the corpus and write corpus.jsonl
    Preprocess,
    /// Prompt for per-meme topics and write assignments.jsonl
    Generate,
    /// Collapse topics to K and write merge_log.jsonl and clusters.json
    Collapse,
    /// Build ten-word representations and write representations.json
    Represent,
    /// Score representations and write report.json
    Evaluate,
    /// Run every stage and write manifest.json
    Run,
    /// Run collapse/represent/evaluate for several K on one generation pass
    Sweep {
        /// Comma-separated K values
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
        ks: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Mock,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pbm,
    Wsm,
}

#[derive(Clone, Copy, ValueEnum)]
enum RepresentationArg {
    Ctfidf,
    Llm,
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration; flags below override it
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    format: Option<FormatArg>,
    #[arg(long, short, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    blocklist: Option<PathBuf>,
    #[arg(long, global = true)]
    demonstrations: Option<PathBuf>,
    #[arg(long, global = true)]
    num_demonstrations: Option<usize>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true)]
    backend: Option<BackendArg>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Response cache (JSONL) for record/replay
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Append every response to the cache
    #[arg(long, global = true)]
    record: bool,
    #[arg(long, global = true)]
    mock_rules: Option<PathBuf>,
    #[arg(long, global = true)]
    method: Option<MethodArg>,
    #[arg(long, short, global = true)]
    k: Option<usize>,
    /// Candidate window M for prompt-based collapse
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    representation: Option<RepresentationArg>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

impl Overrides {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.corpus) {
            (Some(path), _) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(corpus)) => RunConfig::new(corpus, "run"),
            (None, None) => bail!("either --config or --corpus is required"),
        };
        if let Some(v) = &self.corpus {
            cfg.corpus.path = v.clone();
        }
        if let Some(v) = self.format {
            cfg.corpus.format = Some(match v {
                FormatArg::Jsonl => CorpusFormat::Jsonl,
                FormatArg::Csv => CorpusFormat::Csv,
            });
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = &self.stopwords {
            cfg.preprocess.stopwords_path = Some(v.clone());
        }
        if let Some(v) = &self.blocklist {
            cfg.preprocess.blocklist_path = Some(v.clone());
        }
        if let Some(v) = &self.demonstrations {
            cfg.generation.demonstrations_path = Some(v.clone());
        }
        if let Some(v) = self.num_demonstrations {
            cfg.generation.num_demonstrations = v;
        }
        if let Some(v) = self.parallelism {
            cfg.generation.parallelism = v;
        }
        if let Some(v) = self.backend {
            cfg.backend.kind = match v {
                BackendArg::Http => BackendKind::Http,
                BackendArg::Mock => BackendKind::Mock,
                BackendArg::Replay => BackendKind::Replay,
            };
        }
        if let Some(v) = &self.model {
            cfg.backend.model_name = v.clone();
        }
        if let Some(v) = &self.endpoint {
            cfg.backend.endpoint = v.clone();
        }
        if let Some(v) = &self.cache {
            cfg.backend.cache_path = Some(v.clone());
        }
        if self.record {
            cfg.backend.record = true;
        }
        if let Some(v) = &self.mock_rules {
            cfg.backend.mock_rules_path = Some(v.clone());
        }
        if let Some(v) = self.method {
            cfg.collapse.method = match v {
                MethodArg::Pbm => CollapseMethod::Pbm,
                MethodArg::Wsm => CollapseMethod::Wsm,
            };
        }
        if let Some(v) = self.k {
            cfg.collapse.k = v;
        }
        if let Some(v) = self.window {
            cfg.collapse.window = v;
        }
        if let Some(v) = self.representation {
            cfg.representation.method = match v {
                RepresentationArg::Ctfidf => RepresentationMethod::Ctfidf,
                RepresentationArg::Llm => RepresentationMethod::Llm,
            };
        }
        if let Some(v) = self.epsilon {
            cfg.evaluation.epsilon = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = cli.opts.build()?;
    let mut pipeline = Pipeline::new(cfg)?;
    match cli.command {
        Command::Preprocess => {
            let corpus = pipeline.preprocess()?;
            println!("preprocessed {} documents", corpus.total_docs());
        }
        Command::Generate => {
            let corpus = pipeline.load_corpus_artifact().context("run `preprocess` first")?;
            let out = pipeline.generate(&corpus)?;
            let s = &out.summary;
            println!(
                "generated {} / miscellaneous {} / inappropriate {} ({} tokens)",
                s.generated,
                s.miscellaneous,
                s.inappropriate,
                s.llm.usage.total()
            );
        }
        Command::Collapse => {
            let corpus = pipeline.load_corpus_artifact().context("run `preprocess` first")?;
            let assignments = pipeline.load_assignments_artifact().context("run `generate` first")?;
            let state = pipeline.collapse(&corpus, &assignments)?;
            let s = state.summary();
            println!(
                "{} topics after {} merges and {} miscellaneous routings",
                s.topics, s.merges, s.miscellaneous_routings
            );
        }
        Command::Represent => {
            let corpus = pipeline.load_corpus_artifact().context("run `preprocess` first")?;
            let clusters = pipeline.load_clusters_artifact().context("run `collapse` first")?;
            for rep in pipeline.represent(&corpus, &clusters)? {
                println!("{}: {}", rep.topic, rep.words.join(", "));
            }
        }
        Command::Evaluate => {
            let corpus = pipeline.load_corpus_artifact().context("run `preprocess` first")?;
            let reps = pipeline
                .load_representations_artifact()
                .context("run `represent` first")?;
            let report = pipeline.evaluate(&corpus, &reps)?;
            println!(
                "k={} mean_npmi={:.4} diversity={:.4}",
                report.k, report.mean_npmi, report.diversity
            );
        }
        Command::Run => {
            let out = pipeline.run()?;
            debug_assert_eq!(out.manifest.status, RunStatus::Ok);
            println!(
                "{} run: k={} mean_npmi={:.4} diversity={:.4} digest={}",
                out.manifest.variant,
                out.report.k,
                out.report.mean_npmi,
                out.report.diversity,
                out.manifest.config_digest
            );
        }
        Command::Sweep { ks } => {
            let rows = sweep_with(pipeline, &ks)?;
            println!("k,mean_npmi,diversity,status");
            let mut failed = 0;
            for row in &rows {
                let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
                println!("{},{},{},{}", row.k, fmt(row.mean_npmi), fmt(row.diversity), row.status);
                if row.status != "ok" {
                    failed += 1;
                }
            }
            if failed > 0 {
                bail!("{failed} of {} sweep points failed", rows.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
