//! The `crcm` command line: topic sweeps, training, cross-validated
//! evaluation, one-off prediction, the HTTP service, and synthetic corpora.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crcm_core::baselines::{load_fold_metrics, DEFAULT_L2_STRENGTH};
use crcm_core::corpus::{load_posts, load_rules, undersample, Dataset};
use crcm_core::embeddings::{EmbeddingProvider, ProviderKind, ProviderSpec, DEFAULT_DIM};
use crcm_core::eval::{
    ablation_rows, compare, cross_validate, emit_csv, emit_markdown, fit_rule_topics, generate_synthetic, rule_documents,
    Comparison, EvalData, FoldReport, ModelSpec, Report, RuleTopics, SynthSpec,
};
use crcm_core::model::{save_model, train, Aggregation, CrcmModel, TrainConfig};
use crcm_core::topics::{coherence_umass, fit_lda, CoherencePoint, LdaConfig, DEFAULT_TOP_WORDS};
use crcm_service::{check_threshold, moderate, LoadedModel, ServiceConfig};

pub const DEFAULT_K_FOLDS: usize = 10;
pub const DEFAULT_TOPIC_RANGE: &str = "2..10";

#[derive(Debug, Parser)]
#[command(name = "crcm", version, about = "Community-rule-aware content moderation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit rule topics, sweeping the topic count by UMass coherence.
    Topics(TopicsCmd),
    /// Train a model and write it to --model.
    Train(TrainCmd),
    /// Cross-validate CRCM, its ablations and HATE-L2; write report.md and report.csv.
    Eval(EvalCmd),
    /// Score one post with a trained model and print the JSON response.
    Predict(PredictCmd),
    /// Run the HTTP moderation service.
    Serve(ServeCmd),
    /// Write a synthetic rules.jsonl / posts.jsonl pair.
    Synth(SynthCmd),
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Embedding provider.
    #[arg(long, default_value = "hash", value_parser = ["hash", "remote"])]
    pub provider: String,
    /// Base URL of the remote encoder (serves POST /embed).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Embedding dimension.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    /// Model name of the remote encoder, recorded in the provider identity.
    #[arg(long, default_value = "encoder")]
    pub embed_model: String,
    /// Seed of the hashing provider.
    #[arg(long, default_value_t = 0)]
    pub hash_seed: u64,
    /// Persistent embedding cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

impl ProviderArgs {
    pub fn spec(&self) -> anyhow::Result<ProviderSpec> {
        if self.dim == 0 {
            bail!("--dim must be >= 1");
        }
        let kind: ProviderKind = self.provider.parse()?;
        if kind == ProviderKind::Remote && self.endpoint.is_none() {
            bail!("--provider remote requires --endpoint");
        }
        Ok(ProviderSpec {
            kind,
            dim: self.dim,
            seed: self.hash_seed,
            endpoint: self.endpoint.clone(),
            model: self.embed_model.clone(),
            cache: self.cache.clone(),
        })
    }

    pub fn build(&self) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
        Ok(self.spec()?.build()?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TopicArgs {
    /// Fixed number of rule topics (skips the coherence sweep).
    #[arg(long)]
    pub topics: Option<usize>,
    /// Inclusive topic-count range for the sweep, e.g. 2..10.
    #[arg(long, default_value = DEFAULT_TOPIC_RANGE, value_parser = parse_range)]
    pub topic_range: std::vec::Vec<usize>,
    /// Gibbs sweeps per LDA fit.
    #[arg(long, default_value_t = 1000)]
    pub lda_iterations: usize,
}

impl TopicArgs {
    pub fn lda(&self, seed: u64) -> LdaConfig {
        LdaConfig {
            iterations: self.lda_iterations,
            seed,
            ..Default::default()
        }
    }

    fn check(&self) -> anyhow::Result<()> {
        if self.topics == Some(0) {
            bail!("--topics must be >= 1");
        }
        Ok(())
    }
}

/// Parses `a..b`, `a..=b` or `a-b` as the inclusive range `a..=b`.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'))
        .ok_or_else(|| format!("expected a range like 2..10, got {s:?}"))?;
    let lo: usize = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let hi: usize = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
    if lo < 1 || hi < lo {
        return Err(format!("range {s:?} must satisfy 1 <= start <= end"));
    }
    Ok((lo..=hi).collect())
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// L2 strength on classifier parameters.
    #[arg(long, default_value_t = 1e-4)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    /// Seeds LDA, fold splits and training.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Decision threshold stored in the model.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value = "affiliation", value_parser = ["soft_vote", "affiliation"])]
    pub aggregation: String,
    /// Tie all topic classifiers to one parameter vector.
    #[arg(long)]
    pub shared_weights: bool,
    /// Under-sample the majority class before training.
    #[arg(long)]
    pub undersample: bool,
}

impl TrainArgs {
    pub fn config(&self) -> anyhow::Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            mu: self.mu,
            dropout: self.dropout,
            seed: self.seed,
            shared_weights: self.shared_weights,
            ..Default::default()
        };
        cfg.validate()?;
        if cfg.epochs == 0 {
            bail!("--epochs must be >= 1");
        }
        check_threshold(self.threshold)?;
        Ok(cfg)
    }

    pub fn aggregation(&self) -> anyhow::Result<Aggregation> {
        Ok(self.aggregation.parse()?)
    }
}

#[derive(Debug, Args)]
pub struct TopicsCmd {
    #[arg(long)]
    pub rules: PathBuf,
    /// Output directory for topics.json and coherence.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub topics: TopicArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub topics: TopicArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    /// Output directory for report.md and report.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K_FOLDS)]
    pub k_folds: usize,
    /// L2 strength of the HATE-L2 baseline.
    #[arg(long, default_value_t = DEFAULT_L2_STRENGTH)]
    pub l2: f64,
    /// Per-fold metrics of an external model, as NAME=PATH to a
    /// fold,accuracy,precision,recall,f1 CSV. Repeatable.
    #[arg(long, value_parser = parse_external)]
    pub external: Vec<(String, PathBuf)>,
    #[command(flatten)]
    pub topics: TopicArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

fn parse_external(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_owned(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct PredictCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub title: String,
    #[arg(long, default_value = "")]
    pub body: String,
    /// Overrides the model's stored threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct ServeCmd {
    /// TOML or JSON service config; other flags are ignored when given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = crcm_service::DEFAULT_BIND)]
    pub bind: String,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    /// Output directory for rules.jsonl and posts.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub topics: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_posts: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Topics(c) => cmd_topics(&c),
        Command::Train(c) => cmd_train(&c),
        Command::Eval(c) => cmd_eval(&c),
        Command::Predict(c) => cmd_predict(&c),
        Command::Serve(c) => cmd_serve(&c),
        Command::Synth(c) => cmd_synth(&c),
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn load_domain(posts: &Path, rules: &Path) -> anyhow::Result<(Dataset, crcm_core::corpus::RuleSet)> {
    let data = load_posts(posts).with_context(|| format!("cannot load posts from {}", posts.display()))?;
    let rules = load_rules(rules).with_context(|| format!("cannot load rules from {}", rules.display()))?;
    if data.is_empty() {
        bail!("{} contains no posts", posts.display());
    }
    Ok((data, rules))
}

fn rule_topics(
    rules: &crcm_core::corpus::RuleSet,
    provider: &dyn EmbeddingProvider,
    args: &TopicArgs,
    seed: u64,
) -> anyhow::Result<RuleTopics> {
    let t = fit_rule_topics(rules, provider, args.topics, &args.topic_range, &args.lda(seed))?;
    match &t.sweep {
        Some(s) => log::info!("rule topics: K = {} by coherence over {:?}", s.best_k, args.topic_range),
        None => log::info!("rule topics: K = {}", t.summaries.len()),
    }
    Ok(t)
}

#[derive(Serialize)]
struct CoherenceFile {
    best_k: usize,
    points: Vec<CoherencePoint>,
}

pub fn cmd_topics(c: &TopicsCmd) -> anyhow::Result<()> {
    c.topics.check()?;
    let rules = load_rules(&c.rules).with_context(|| format!("cannot load rules from {}", c.rules.display()))?;
    let docs = rule_documents(&rules);
    let lda = c.topics.lda(c.seed);
    let (model, curve) = match c.topics.topics {
        Some(k) => {
            let m = fit_lda(&docs, k, &lda)?;
            let coherence = coherence_umass(&m, &docs, DEFAULT_TOP_WORDS);
            (m, CoherenceFile { best_k: k, points: vec![CoherencePoint { k, coherence }] })
        }
        None => {
            let (sweep, models) = crcm_core::topics::sweep_topic_count(&docs, &c.topics.topic_range, &lda, DEFAULT_TOP_WORDS)?;
            let best = models.into_iter().find(|m| m.k == sweep.best_k).expect("chosen model");
            (best, CoherenceFile { best_k: sweep.best_k, points: sweep.points })
        }
    };
    out_dir(&c.out)?;
    let summaries = crcm_core::topics::summarize(&model, DEFAULT_TOP_WORDS);
    write(&c.out.join("topics.json"), &serde_json::to_string_pretty(&summaries)?)?;
    write(&c.out.join("coherence.json"), &serde_json::to_string_pretty(&curve)?)?;
    println!("K = {} ({} rule documents); wrote {}", curve.best_k, docs.len(), c.out.display());
    Ok(())
}

pub fn cmd_train(c: &TrainCmd) -> anyhow::Result<()> {
    c.topics.check()?;
    let cfg = c.train.config()?;
    let aggregation = c.train.aggregation()?;
    let provider = c.provider.build()?;
    let (mut data, rules) = load_domain(&c.posts, &c.rules)?;
    if c.train.undersample {
        data = undersample(&data, c.train.seed)?;
    }
    let topics = rule_topics(&rules, &*provider, &c.topics, c.train.seed)?;
    let mut init = CrcmModel::new(topics.matrix, provider.identity(), aggregation)?;
    init.threshold = c.train.threshold;
    let (model, report) = train(&init, &data, &*provider, &cfg)?;
    save_model(&model, &c.model).with_context(|| format!("cannot write model {}", c.model.display()))?;
    println!(
        "trained K = {} on {} posts; final loss {:.6}; wrote {}",
        model.k(),
        data.len(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        c.model.display()
    );
    Ok(())
}

/// Runs the full evaluation and returns the report; `cmd_eval` writes it.
pub fn evaluate(c: &EvalCmd) -> anyhow::Result<Report> {
    c.topics.check()?;
    let cfg = c.train.config()?;
    let aggregation = c.train.aggregation()?;
    let provider = c.provider.build()?;
    let (mut data, rules) = load_domain(&c.posts, &c.rules)?;
    if c.train.undersample {
        data = undersample(&data, c.train.seed)?;
    }
    let topics = rule_topics(&rules, &*provider, &c.topics, c.train.seed)?;
    let ev = EvalData::new(&data, &*provider, Some(topics.matrix))?;
    let k = c.k_folds;
    let seed = c.train.seed;

    let run = |spec: ModelSpec| -> anyhow::Result<FoldReport> {
        log::info!("cross-validating {}", spec.name());
        Ok(cross_validate(&spec, &ev, k, seed)?)
    };
    let full = run(ModelSpec::Crcm { aggregation: Aggregation::Affiliation, config: cfg.clone() })?;
    let soft = run(ModelSpec::Crcm { aggregation: Aggregation::SoftVote, config: cfg.clone() })?;
    let free = run(ModelSpec::RuleFree { config: cfg.clone() })?;
    let hate = run(ModelSpec::HateL2 { config: cfg.clone(), l2_strength: c.l2 })?;

    let reference = match aggregation {
        Aggregation::Affiliation => full.clone(),
        Aggregation::SoftVote => soft.clone(),
    };
    let mut models = vec![reference.clone(), hate];
    for (name, path) in &c.external {
        let folds = load_fold_metrics(path).with_context(|| format!("cannot load external metrics {}", path.display()))?;
        if folds.len() != k {
            bail!("{} has {} folds but --k-folds is {k}", path.display(), folds.len());
        }
        models.push(FoldReport::new(name.clone(), seed, folds));
    }
    let comparisons = models[1..]
        .iter()
        .map(|m| {
            Ok(Comparison {
                model: m.model.clone(),
                reference: reference.model.clone(),
                tests: compare(m, &reference)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Report {
        domain: data.domain.clone(),
        k_folds: k,
        seed,
        models,
        comparisons,
        ablation: ablation_rows(full, soft, free)?,
    })
}

pub fn cmd_eval(c: &EvalCmd) -> anyhow::Result<()> {
    let report = evaluate(c)?;
    out_dir(&c.out)?;
    write(&c.out.join("report.md"), &emit_markdown(&report))?;
    write(&c.out.join("report.csv"), &emit_csv(&report)?)?;
    println!("wrote {} and {}", c.out.join("report.md").display(), c.out.join("report.csv").display());
    Ok(())
}

pub fn predict_json(c: &PredictCmd) -> anyhow::Result<String> {
    let provider = c.provider.build()?;
    let loaded = LoadedModel::load_for(&c.model, provider.dimension(), c.threshold)
        .with_context(|| format!("cannot load model {}", c.model.display()))?;
    let resp = moderate(&loaded, &*provider, &c.title, &c.body)?;
    Ok(serde_json::to_string(&resp)?)
}

pub fn cmd_predict(c: &PredictCmd) -> anyhow::Result<()> {
    println!("{}", predict_json(c)?);
    Ok(())
}

pub fn cmd_serve(c: &ServeCmd) -> anyhow::Result<()> {
    let cfg = match &c.config {
        Some(path) => ServiceConfig::load(path).with_context(|| format!("cannot load config {}", path.display()))?,
        None => ServiceConfig {
            bind: c.bind.clone(),
            model: c.model.clone().expect("clap enforces --model"),
            threshold: c.threshold,
            provider: c.provider.spec()?,
            communities: Default::default(),
        },
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crcm_service::serve(cfg))?;
    Ok(())
}

pub fn cmd_synth(c: &SynthCmd) -> anyhow::Result<()> {
    let corpus = generate_synthetic(&SynthSpec {
        topics: c.topics,
        n_posts: c.n_posts,
        noise: c.noise,
        seed: c.seed,
        ..Default::default()
    })?;
    out_dir(&c.out)?;
    write(&c.out.join("rules.jsonl"), &corpus.rules_jsonl)?;
    write(&c.out.join("posts.jsonl"), &corpus.posts_jsonl)?;
    println!("wrote {} posts and {} topics to {}", c.n_posts, c.topics, c.out.display());
    Ok(())
}
