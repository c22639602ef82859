//! Metrics, stratified cross-validation, paired t-tests, ablations, report
//! rendering, and the synthetic corpus generator.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{train_hate_l2, train_rule_free_embeddings, RuleFreeModel};
use crate::corpus::{stratified_kfold, to_jsonl, CommunityRule, Dataset, Post, RuleSet};
use crate::embeddings::{EmbeddingProvider, EmbeddingVector, ProviderIdentity};
use crate::model::{train_embeddings, Aggregation, CrcmModel, TrainConfig};
use crate::rules::{build_rule_matrix, RuleMatrix};
use crate::textprep::{preprocess, TokenStream};
use crate::topics::{fit_lda, summarize, sweep_topic_count, LdaConfig, TopicSummary, TopicSweep, DEFAULT_TOP_WORDS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }
}

impl Metrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
        }
    }

    /// Component-wise arithmetic mean.
    pub fn mean(all: &[Metrics]) -> Metrics {
        let n = all.len() as f64;
        let avg = |m: Metric| all.iter().map(|x| x.get(m)).sum::<f64>() / n;
        Metrics {
            accuracy: avg(Metric::Accuracy),
            precision: avg(Metric::Precision),
            recall: avg(Metric::Recall),
            f1: avg(Metric::F1),
        }
    }
}

/// Confusion counts with "moderated" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn count(predictions: &[bool], labels: &[bool]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: predictions.len(),
                right: labels.len(),
            });
        }
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.tp + self.fp + self.fn_ + self.tn),
            precision,
            recall,
            f1,
        }
    }
}

pub fn compute_metrics(predictions: &[bool], labels: &[bool]) -> Result<Metrics> {
    if labels.is_empty() {
        return Err(Error::EmptyCorpus("no predictions to score".into()));
    }
    Ok(Confusion::count(predictions, labels)?.metrics())
}

/// What to train in each fold.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Crcm { aggregation: Aggregation, config: TrainConfig },
    RuleFree { config: TrainConfig },
    HateL2 { config: TrainConfig, l2_strength: f64 },
    /// Always predicts the given label.
    Constant(bool),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Crcm {
                aggregation: Aggregation::Affiliation,
                ..
            } => "CRCM".into(),
            ModelSpec::Crcm {
                aggregation: Aggregation::SoftVote,
                ..
            } => "CRCM (soft vote)".into(),
            ModelSpec::RuleFree { .. } => "rule-free".into(),
            ModelSpec::HateL2 { .. } => "HATE-L2".into(),
            ModelSpec::Constant(true) => "constant (moderated)".into(),
            ModelSpec::Constant(false) => "constant (kept)".into(),
        }
    }
}

/// A dataset with every post embedded once, plus the domain's rule matrix.
pub struct EvalData<'a> {
    pub dataset: &'a Dataset,
    pub embeddings: Vec<EmbeddingVector>,
    pub rule_matrix: Option<RuleMatrix>,
    pub provider: ProviderIdentity,
}

impl<'a> EvalData<'a> {
    pub fn new<P: EmbeddingProvider + ?Sized>(
        dataset: &'a Dataset,
        provider: &P,
        rule_matrix: Option<RuleMatrix>,
    ) -> Result<Self> {
        let contents = dataset.contents();
        let refs: Vec<&str> = contents.iter().map(String::as_str).collect();
        let embeddings = provider.embed_batch(&refs)?;
        if let Some(m) = &rule_matrix {
            if m.dim() != provider.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: provider.dimension(),
                    got: m.dim(),
                });
            }
        }
        Ok(EvalData {
            dataset,
            embeddings,
            rule_matrix,
            provider: provider.identity(),
        })
    }

    fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
        idx.iter().map(|&i| items[i].clone()).collect()
    }

    /// Trains `spec` on `train` and returns predictions for `test`.
    fn fit_predict(&self, spec: &ModelSpec, train: &[usize], test: &[usize], seed: u64) -> Result<Vec<bool>> {
        let labels = self.dataset.labels();
        let train_y = Self::pick(&labels, train);
        let train_x = Self::pick(&self.embeddings, train);
        match spec {
            ModelSpec::Constant(v) => Ok(vec![*v; test.len()]),
            ModelSpec::Crcm { aggregation, config } => {
                let rules = self
                    .rule_matrix
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("CRCM needs a rule matrix".into()))?;
                let init = CrcmModel::new(rules, self.provider.clone(), *aggregation)?;
                let cfg = TrainConfig { seed, ..config.clone() };
                let (m, _) = train_embeddings(&init, &train_x, &train_y, &cfg)?;
                test.iter()
                    .map(|&i| Ok(m.predict_embedding(self.embeddings[i].as_slice())?.decision))
                    .collect()
            }
            ModelSpec::RuleFree { config } => {
                let cfg = TrainConfig { seed, ..config.clone() };
                let (m, _) = train_rule_free_embeddings(&RuleFreeModel::new(self.provider.clone()), &train_x, &train_y, &cfg)?;
                test.iter()
                    .map(|&i| Ok(m.probability(self.embeddings[i].as_slice())? >= m.threshold))
                    .collect()
            }
            ModelSpec::HateL2 { config, l2_strength } => {
                let cfg = TrainConfig { seed, ..config.clone() };
                let (m, _) = train_hate_l2(&self.dataset.subset(train), *l2_strength, &cfg)?;
                Ok(test.iter().map(|&i| m.predict(&self.dataset.posts[i].content())).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub model: String,
    pub seed: u64,
    pub folds: Vec<Metrics>,
    pub mean: Metrics,
}

impl FoldReport {
    pub fn new(model: impl Into<String>, seed: u64, folds: Vec<Metrics>) -> Self {
        let mean = Metrics::mean(&folds);
        FoldReport {
            model: model.into(),
            seed,
            folds,
            mean,
        }
    }

    pub fn series(&self, m: Metric) -> Vec<f64> {
        self.folds.iter().map(|f| f.get(m)).collect()
    }
}

/// Stratified k-fold CV. Fold `i` trains with seed `seed + i`; the split
/// itself uses `seed`. Folds run on separate threads and are collected in
/// fold order, so the result does not depend on scheduling.
pub fn cross_validate(spec: &ModelSpec, data: &EvalData<'_>, k: usize, seed: u64) -> Result<FoldReport> {
    let split = stratified_kfold(data.dataset, k, seed)?;
    let labels = data.dataset.labels();
    let results: Vec<Result<Metrics>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..k)
            .map(|i| {
                let (train, test) = split.train_test(i);
                let labels = &labels;
                scope.spawn(move || {
                    let preds = data.fit_predict(spec, &train, &test, seed.wrapping_add(i as u64))?;
                    let truth: Vec<bool> = test.iter().map(|&j| labels[j]).collect();
                    compute_metrics(&preds, &truth)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FoldReport::new(spec.name(), seed, folds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub mean_difference: f64,
}

/// Two-sided paired t-test on `d_i = a_i - b_i`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
    let sd = var.sqrt();
    let df = k - 1;
    if sd == 0.0 {
        if mean != 0.0 {
            return Err(Error::DegenerateVariance);
        }
        return Ok(TTestResult {
            t_statistic: 0.0,
            degrees_of_freedom: df,
            p_value: 1.0,
            mean_difference: 0.0,
        });
    }
    let t = mean * (k as f64).sqrt() / sd;
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t_two_sided(t, df as f64),
        mean_difference: mean,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Like [`paired_t_test`], but a constant non-zero difference is reported as
/// its limit (`t = +-inf`, `p = 0`) instead of an error.
pub fn paired_t_test_or_limit(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    match paired_t_test(a, b) {
        Err(Error::DegenerateVariance) => {
            let mean = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
            Ok(TTestResult {
                t_statistic: f64::INFINITY.copysign(mean),
                degrees_of_freedom: a.len() - 1,
                p_value: 0.0,
                mean_difference: mean,
            })
        }
        other => other,
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Per-metric paired tests of `other - reference` over matching folds.
pub fn compare(other: &FoldReport, reference: &FoldReport) -> Result<Vec<(Metric, TTestResult)>> {
    Metric::ALL
        .iter()
        .map(|&m| Ok((m, paired_t_test_or_limit(&other.series(m), &reference.series(m))?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub model: String,
    pub reference: String,
    pub tests: Vec<(Metric, TTestResult)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub report: FoldReport,
    /// Tests of this variant against the full model; empty for the full model.
    pub tests: Vec<(Metric, TTestResult)>,
}

/// Full CRCM (affiliation), affiliation-ablated (soft vote) and rules-ablated
/// (rule-free) on identical folds and seeds.
pub fn ablation_run(data: &EvalData<'_>, config: &TrainConfig, k: usize, seed: u64) -> Result<Vec<AblationRow>> {
    let full = cross_validate(
        &ModelSpec::Crcm {
            aggregation: Aggregation::Affiliation,
            config: config.clone(),
        },
        data,
        k,
        seed,
    )?;
    let soft = cross_validate(
        &ModelSpec::Crcm {
            aggregation: Aggregation::SoftVote,
            config: config.clone(),
        },
        data,
        k,
        seed,
    )?;
    let free = cross_validate(&ModelSpec::RuleFree { config: config.clone() }, data, k, seed)?;
    ablation_rows(full, soft, free)
}

pub fn ablation_rows(full: FoldReport, soft: FoldReport, free: FoldReport) -> Result<Vec<AblationRow>> {
    let mut rows = vec![AblationRow {
        variant: "full CRCM".into(),
        report: full.clone(),
        tests: Vec::new(),
    }];
    for (variant, report) in [("without affiliation", soft), ("without community rules", free)] {
        rows.push(AblationRow {
            variant: variant.into(),
            tests: compare(&report, &full)?,
            report,
        });
    }
    Ok(rows)
}

/// Everything a report renders.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub domain: String,
    pub k_folds: usize,
    pub seed: u64,
    pub models: Vec<FoldReport>,
    pub comparisons: Vec<Comparison>,
    pub ablation: Vec<AblationRow>,
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn fmt_t(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.3}")
    }
}

pub fn emit_markdown(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Moderation results: {}\n", report.domain);
    let _ = writeln!(out, "{}-fold stratified cross-validation, seed {}.\n", report.k_folds, report.seed);

    if !report.models.is_empty() {
        let _ = writeln!(out, "## Performance\n");
        let _ = writeln!(out, "| Model | Accuracy | Precision | Recall | F1 |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        let best: Vec<f64> = Metric::ALL
            .iter()
            .map(|&m| report.models.iter().map(|r| r.mean.get(m)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for r in &report.models {
            let cells: Vec<String> = Metric::ALL
                .iter()
                .zip(&best)
                .map(|(&m, &b)| {
                    let v = r.mean.get(m);
                    if report.models.len() > 1 && fmt4(v) == fmt4(b) {
                        format!("**{}**", fmt4(v))
                    } else {
                        fmt4(v)
                    }
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", r.model, cells.join(" | "));
        }
        out.push('\n');
    }

    if !report.comparisons.is_empty() {
        let _ = writeln!(out, "## Paired t-tests against {}\n", report.comparisons[0].reference);
        let _ = writeln!(out, "t statistics of model minus reference over folds.\n");
        let _ = writeln!(out, "| Model | Accuracy | Precision | Recall | F1 |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for c in &report.comparisons {
            let cells: Vec<String> = c
                .tests
                .iter()
                .map(|(_, t)| format!("{}{}", fmt_t(t.t_statistic), stars(t.p_value)))
                .collect();
            let _ = writeln!(out, "| {} | {} |", c.model, cells.join(" | "));
        }
        let _ = writeln!(out, "\n***: p < .001, **: p < .01, *: p < .05 (two-sided)\n");
    }

    if !report.ablation.is_empty() {
        let _ = writeln!(out, "## Ablation\n");
        let _ = writeln!(out, "Mean difference to the full model (t statistic).\n");
        let _ = writeln!(out, "| Variant | Accuracy | Precision | Recall | F1 |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for row in &report.ablation {
            let cells: Vec<String> = if row.tests.is_empty() {
                Metric::ALL.iter().map(|&m| fmt4(row.report.mean.get(m))).collect()
            } else {
                row.tests
                    .iter()
                    .map(|(_, t)| {
                        format!("{:+.4} ({}){}", t.mean_difference, fmt_t(t.t_statistic), stars(t.p_value))
                    })
                    .collect()
            };
            let _ = writeln!(out, "| {} | {} |", row.variant, cells.join(" | "));
        }
    }
    out
}

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "table",
    "model",
    "fold",
    "metric",
    "value",
    "reference",
    "mean_difference",
    "t_statistic",
    "df",
    "p_value",
];

/// Long-format CSV: per-fold and mean metrics, t-tests, and ablation rows.
pub fn emit_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_CSV_HEADER)?;
    let blank = String::new();
    let metric_rows = |w: &mut csv::Writer<Vec<u8>>, table: &str, r: &FoldReport| -> Result<()> {
        for (i, f) in r.folds.iter().enumerate() {
            for m in Metric::ALL {
                w.write_record([table, &r.model, &i.to_string(), m.name(), &f.get(m).to_string(), "", "", "", "", ""])?;
            }
        }
        for m in Metric::ALL {
            w.write_record([table, &r.model, "mean", m.name(), &r.mean.get(m).to_string(), "", "", "", "", ""])?;
        }
        Ok(())
    };
    let test_row = |w: &mut csv::Writer<Vec<u8>>, table: &str, model: &str, reference: &str, m: Metric, t: &TTestResult| {
        w.write_record([
            table,
            model,
            "",
            m.name(),
            "",
            reference,
            &t.mean_difference.to_string(),
            &t.t_statistic.to_string(),
            &t.degrees_of_freedom.to_string(),
            &t.p_value.to_string(),
        ])
    };
    for r in &report.models {
        metric_rows(&mut w, "performance", r)?;
    }
    for c in &report.comparisons {
        for (m, t) in &c.tests {
            test_row(&mut w, "significance", &c.model, &c.reference, *m, t)?;
        }
    }
    for row in &report.ablation {
        metric_rows(&mut w, "ablation", &row.report)?;
        let reference = report.ablation.first().map(|r| &r.report.model).unwrap_or(&blank);
        for (m, t) in &row.tests {
            test_row(&mut w, "ablation_test", &row.report.model, reference, *m, t)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Rule topics for one domain: LDA over the rule texts (with `topics` fixed,
/// or chosen by coherence over `range`), summarized and embedded.
pub struct RuleTopics {
    pub summaries: Vec<TopicSummary>,
    pub sweep: Option<TopicSweep>,
    pub matrix: RuleMatrix,
}

pub fn rule_documents(rules: &RuleSet) -> Vec<TokenStream> {
    rules.iter().map(|r| preprocess(&r.text)).filter(|t| !t.is_empty()).collect()
}

pub fn fit_rule_topics<P: EmbeddingProvider + ?Sized>(
    rules: &RuleSet,
    provider: &P,
    topics: Option<usize>,
    range: &[usize],
    lda: &LdaConfig,
) -> Result<RuleTopics> {
    let docs = rule_documents(rules);
    let (model, sweep) = match topics {
        Some(k) => (fit_lda(&docs, k, lda)?, None),
        None => {
            let (sweep, models) = sweep_topic_count(&docs, range, lda, DEFAULT_TOP_WORDS)?;
            let best = models
                .into_iter()
                .find(|m| m.k == sweep.best_k)
                .expect("sweep returns the chosen model");
            (best, Some(sweep))
        }
    };
    let summaries = summarize(&model, DEFAULT_TOP_WORDS);
    let matrix = build_rule_matrix(&summaries, provider)?;
    Ok(RuleTopics {
        summaries,
        sweep,
        matrix,
    })
}

/// Parameters of the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub topics: usize,
    pub n_posts: usize,
    /// Fraction of each class whose label is flipped.
    pub noise: f64,
    pub seed: u64,
    pub pool_size: usize,
    pub rules_per_topic: usize,
    pub keywords_per_rule: usize,
    pub background_size: usize,
    pub keywords_per_post: usize,
    pub words_per_post: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            topics: 4,
            n_posts: 2000,
            noise: 0.1,
            seed: 0,
            pool_size: 12,
            rules_per_topic: 3,
            keywords_per_rule: 8,
            background_size: 300,
            keywords_per_post: 4,
            words_per_post: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub rules_jsonl: String,
    pub posts_jsonl: String,
    pub pools: Vec<Vec<String>>,
    pub background: Vec<String>,
}

impl SyntheticCorpus {
    /// True when `text` contains any planted keyword.
    pub fn oracle(&self, text: &str) -> bool {
        let tokens = preprocess(text);
        tokens
            .iter()
            .any(|t| self.pools.iter().any(|p| p.iter().any(|w| w == t)))
    }
}

pub const SYNTH_COMMUNITY: &str = "synthetic";

/// Pronounceable pseudo-words that end in a vowel, so neither the stopword
/// list nor the stemmer touches them.
fn pseudo_words(n: usize, rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprtvz";
    const V: &[u8] = b"aiou";
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(*C.choose(rng).expect("consonants") as char);
            w.push(*V.choose(rng).expect("vowels") as char);
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Builds a balanced synthetic domain. Moderated posts mix
/// `keywords_per_post` words from one topic pool into background words;
/// kept posts use background words only. Exactly `round(noise * n / 2)`
/// labels are flipped in each class, so class counts stay equal.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
    if spec.topics < 2 {
        return bad("synthetic corpus needs at least 2 topics");
    }
    if spec.n_posts < 100 || spec.n_posts % 2 != 0 {
        return bad("n_posts must be an even number >= 100");
    }
    if !(0.0..0.5).contains(&spec.noise) {
        return bad("noise must be in [0, 0.5)");
    }
    if spec.pool_size == 0
        || spec.keywords_per_rule == 0
        || spec.keywords_per_rule > spec.pool_size
        || spec.rules_per_topic == 0
        || spec.keywords_per_post == 0
        || spec.keywords_per_post >= spec.words_per_post
        || spec.background_size == 0
    {
        return bad("inconsistent synthetic corpus sizes");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = BTreeSet::new();
    let pools: Vec<Vec<String>> = (0..spec.topics)
        .map(|_| pseudo_words(spec.pool_size, &mut rng, &mut taken))
        .collect();
    let background = pseudo_words(spec.background_size, &mut rng, &mut taken);

    const TEMPLATES: [(&str, &str); 3] = [("No ", " here."), ("Please do not ", "."), ("Do not ", ", please.")];
    let mut rules = Vec::new();
    for pool in &pools {
        let mut order = pool.clone();
        order.shuffle(&mut rng);
        for r in 0..spec.rules_per_topic {
            let words: Vec<&str> = (0..spec.keywords_per_rule)
                .map(|j| order[(r * spec.keywords_per_rule + j) % order.len()].as_str())
                .collect();
            let (pre, post) = TEMPLATES[rules.len() % TEMPLATES.len()];
            rules.push(CommunityRule {
                community: SYNTH_COMMUNITY.into(),
                rule_index: rules.len() as u64 + 1,
                text: format!("{pre}{}{post}", words.join(", ")),
            });
        }
    }

    let half = spec.n_posts / 2;
    let mut drafts: Vec<(Vec<String>, bool)> = Vec::with_capacity(spec.n_posts);
    for i in 0..spec.n_posts {
        let moderated = i < half;
        let n_kw = if moderated { spec.keywords_per_post } else { 0 };
        let mut words: Vec<String> = (0..spec.words_per_post - n_kw)
            .map(|_| background.choose(&mut rng).expect("background").clone())
            .collect();
        if moderated {
            let pool = pools.choose(&mut rng).expect("pools");
            words.extend((0..n_kw).map(|_| pool.choose(&mut rng).expect("pool").clone()));
            words.shuffle(&mut rng);
        }
        drafts.push((words, moderated));
    }
    let flips = (spec.noise * half as f64).round() as usize;
    for class in [0, half] {
        let mut idx: Vec<usize> = (class..class + half).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..flips] {
            drafts[i].1 = !drafts[i].1;
        }
    }
    drafts.shuffle(&mut rng);

    let posts: Vec<Post> = drafts
        .into_iter()
        .enumerate()
        .map(|(i, (words, moderated))| {
            let split = words.len().min(4);
            Post {
                id: format!("syn-{i:05}"),
                community: SYNTH_COMMUNITY.into(),
                title: words[..split].join(" "),
                body: words[split..].join(" "),
                created_utc: 1_600_000_000 + 60 * i as i64,
                moderated,
            }
        })
        .collect();

    Ok(SyntheticCorpus {
        rules_jsonl: to_jsonl(&rules),
        posts_jsonl: to_jsonl(&posts),
        pools,
        background,
    })
}
