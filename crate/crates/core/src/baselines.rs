//! Comparators for the rule-conditioned model: a rule-free logistic
//! classifier over post embeddings, and HATE-L2 (TF-IDF n-grams with an
//! L2-regularized logistic regression).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::corpus::{content_of, Dataset};
use crate::embeddings::{EmbeddingProvider, EmbeddingVector, ProviderIdentity};
use crate::eval::Metrics;
use crate::model::{TrainConfig, TrainReport};
use crate::optim::{bce, shuffled_batches, sigmoid, Adam, Dropout, SparseVec};
use crate::textprep::{ngrams, preprocess_with, stem, Stopwords};
use crate::{Error, Result};

pub const DEFAULT_L2_STRENGTH: f64 = 1e-4;
pub const FOLD_METRICS_HEADER: [&str; 5] = ["fold", "accuracy", "precision", "recall", "f1"];

/// Mean BCE of `sigmoid(w.x + b)` plus `mu * (|w|^2 + b^2)` over `batch`.
/// `params` is `[w..., b]`; the gradient is added into `grads`.
fn logistic_objective(
    inputs: &[SparseVec],
    labels: &[bool],
    params: &[f64],
    batch: &[usize],
    mu: f64,
    dropout: Dropout,
    rng: &mut ChaCha8Rng,
    grads: &mut [f64],
) -> f64 {
    let dim = params.len() - 1;
    let scale = 1.0 / batch.len() as f64;
    let mut mask = Vec::new();
    let mut total = 0.0;
    for &i in batch {
        let x = &inputs[i];
        mask.clear();
        let mut z = params[dim];
        for (&j, &v) in x.idx.iter().zip(&x.val) {
            let m = dropout.sample(rng);
            mask.push(m);
            z += params[j as usize] * v * m;
        }
        let p = sigmoid(z);
        let (l, dl_dp) = bce(p, labels[i]);
        total += l;
        let gz = scale * dl_dp * p * (1.0 - p);
        if gz == 0.0 {
            continue;
        }
        for ((&j, &v), &m) in x.idx.iter().zip(&x.val).zip(&mask) {
            grads[j as usize] += gz * v * m;
        }
        grads[dim] += gz;
    }
    let mut reg = 0.0;
    if mu > 0.0 {
        for (g, &p) in grads.iter_mut().zip(params) {
            reg += p * p;
            *g += 2.0 * mu * p;
        }
    }
    total * scale + mu * reg
}

/// Mini-batch Adam over sparse inputs, starting from `init`.
fn train_logistic(
    inputs: &[SparseVec],
    labels: &[bool],
    init: Vec<f64>,
    mu: f64,
    dropout: f64,
    config: &TrainConfig,
) -> (Vec<f64>, TrainReport) {
    let mut params = init;
    let mut adam = Adam::new(config.adam(), params.len());
    let mut grads = vec![0.0; params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dropout = Dropout::new(dropout);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let batches = shuffled_batches(labels.len(), config.batch_size, &mut rng);
        let mut sum = 0.0;
        for batch in &batches {
            grads.iter_mut().for_each(|g| *g = 0.0);
            sum += logistic_objective(inputs, labels, &params, batch, mu, dropout, &mut rng, &mut grads);
            adam.step(&mut params, &grads);
        }
        epoch_losses.push(sum / batches.len() as f64);
    }
    (params, TrainReport { epoch_losses })
}

fn exact_objective(inputs: &[SparseVec], labels: &[bool], params: &[f64], mu: f64) -> (f64, Vec<f64>) {
    let mut grads = vec![0.0; params.len()];
    let all: Vec<usize> = (0..labels.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let l = logistic_objective(inputs, labels, params, &all, mu, Dropout::new(0.0), &mut rng, &mut grads);
    (l, grads)
}

fn check_examples(n_inputs: usize, labels: &[bool]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyCorpus("no training examples".into()));
    }
    if n_inputs != labels.len() {
        return Err(Error::LengthMismatch {
            left: n_inputs,
            right: labels.len(),
        });
    }
    Ok(())
}

/// `sigmoid(W h_c + b)`: the classifier with the rule component removed.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleFreeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub provider: ProviderIdentity,
}

impl RuleFreeModel {
    pub fn new(provider: ProviderIdentity) -> Self {
        RuleFreeModel {
            weights: vec![0.0; provider.dim],
            bias: 0.0,
            threshold: 0.5,
            provider,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let d = self.dim();
        assert_eq!(params.len(), d + 1);
        self.weights.copy_from_slice(&params[..d]);
        self.bias = params[d];
    }

    pub fn probability(&self, h_c: &[f64]) -> Result<f64> {
        if h_c.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: h_c.len(),
            });
        }
        Ok(sigmoid(crate::embeddings::dot(&self.weights, h_c) + self.bias))
    }

    pub fn predict_text<P: EmbeddingProvider + ?Sized>(&self, title: &str, body: &str, provider: &P) -> Result<f64> {
        if provider.dimension() != self.dim() {
            return Err(Error::ModelDimension {
                model: self.dim(),
                provider: provider.dimension(),
            });
        }
        self.probability(provider.embed_text(&content_of(title, body))?.as_slice())
    }

    /// Objective and gradient over `(h_c, label)` pairs with dropout off.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], bool)], mu: f64) -> (f64, Vec<f64>) {
        let inputs: Vec<SparseVec> = batch.iter().map(|(h, _)| SparseVec::from_dense(h)).collect();
        let labels: Vec<bool> = batch.iter().map(|(_, y)| *y).collect();
        exact_objective(&inputs, &labels, &self.params(), mu)
    }
}

pub fn train_rule_free_embeddings(
    model: &RuleFreeModel,
    embeddings: &[EmbeddingVector],
    labels: &[bool],
    config: &TrainConfig,
) -> Result<(RuleFreeModel, TrainReport)> {
    config.validate()?;
    check_examples(embeddings.len(), labels)?;
    if let Some(e) = embeddings.iter().find(|e| e.dim() != model.dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: e.dim(),
        });
    }
    let inputs: Vec<SparseVec> = embeddings.iter().map(|e| SparseVec::from_dense(e.as_slice())).collect();
    let (params, report) = train_logistic(&inputs, labels, model.params(), config.mu, config.dropout, config);
    let mut trained = model.clone();
    trained.set_params(&params);
    Ok((trained, report))
}

pub fn train_rule_free<P: EmbeddingProvider + ?Sized>(
    dataset: &Dataset,
    provider: &P,
    config: &TrainConfig,
) -> Result<(RuleFreeModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus("training dataset has no posts".into()));
    }
    let contents = dataset.contents();
    let refs: Vec<&str> = contents.iter().map(String::as_str).collect();
    let embeddings = provider.embed_batch(&refs)?;
    train_rule_free_embeddings(&RuleFreeModel::new(provider.identity()), &embeddings, &dataset.labels(), config)
}

/// TF-IDF over lowercased, stemmed word n-grams.
///
/// `tf` is the raw count, `idf = ln((1 + N) / (1 + df)) + 1`, and each
/// document vector is L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfVectorizer {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    idf: Vec<f64>,
    n_min: usize,
    n_max: usize,
}

impl TfidfVectorizer {
    pub fn fit(docs: &[&str]) -> Result<Self> {
        Self::fit_ngrams(docs, 1, 3)
    }

    pub fn fit_ngrams(docs: &[&str], n_min: usize, n_max: usize) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus("TF-IDF needs at least one document".into()));
        }
        if n_min == 0 || n_max < n_min {
            return Err(Error::InvalidArgument(format!("bad n-gram range {n_min}..={n_max}")));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let uniq: BTreeSet<String> = analyze(doc, n_min, n_max).into_iter().collect();
            for term in uniq {
                *df.entry(term).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut terms: Vec<String> = df.keys().cloned().collect();
        terms.sort_unstable();
        let n = docs.len() as f64;
        let idf = terms.iter().map(|t| ((1.0 + n) / (1.0 + df[t] as f64)).ln() + 1.0).collect();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(TfidfVectorizer {
            terms,
            index,
            idf,
            n_min,
            n_max,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index.get(term).map(|&i| self.idf[i as usize])
    }

    /// Sparse, L2-normalized features sorted by index. Terms outside the
    /// fitted vocabulary are ignored; an empty document maps to no features.
    pub fn transform(&self, doc: &str) -> SparseVec {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for term in analyze(doc, self.n_min, self.n_max) {
            if let Some(&i) = self.index.get(&term) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut pairs: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i as usize]))
            .collect();
        pairs.sort_unstable_by_key(|&(i, _)| i);
        let norm = pairs.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        let mut out = SparseVec::default();
        for (i, v) in pairs {
            out.idx.push(i);
            out.val.push(v / norm);
        }
        out
    }
}

fn analyze(doc: &str, n_min: usize, n_max: usize) -> Vec<String> {
    static NONE: std::sync::LazyLock<Stopwords> = std::sync::LazyLock::new(|| Stopwords::parse(""));
    let stems: Vec<String> = preprocess_with(doc, &NONE).iter().map(|t| stem(t)).collect();
    ngrams(&stems, n_min, n_max)
}

/// The HATE-L2 baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfLogReg {
    pub vectorizer: TfidfVectorizer,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_strength: f64,
    pub threshold: f64,
}

impl TfidfLogReg {
    pub fn probability(&self, text: &str) -> f64 {
        let x = self.vectorizer.transform(text);
        let z = self.bias + x.idx.iter().zip(&x.val).map(|(&j, v)| self.weights[j as usize] * v).sum::<f64>();
        sigmoid(z)
    }

    pub fn predict(&self, text: &str) -> bool {
        self.probability(text) >= self.threshold
    }
}

/// Objective and gradient of an L2 logistic regression over explicit sparse
/// rows; `params` is `[w..., b]`.
pub fn sparse_logistic_loss(rows: &[SparseVec], labels: &[bool], params: &[f64], l2: f64) -> (f64, Vec<f64>) {
    exact_objective(rows, labels, params, l2)
}

/// Fits the vectorizer on the training posts and trains the regression with
/// the shared Adam loop. Dropout is not used for this baseline.
pub fn train_hate_l2(dataset: &Dataset, l2_strength: f64, config: &TrainConfig) -> Result<(TfidfLogReg, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus("training dataset has no posts".into()));
    }
    if !(l2_strength >= 0.0 && l2_strength.is_finite()) {
        return Err(Error::InvalidArgument("l2 strength must be >= 0".into()));
    }
    let contents = dataset.contents();
    let refs: Vec<&str> = contents.iter().map(String::as_str).collect();
    let vectorizer = TfidfVectorizer::fit(&refs)?;
    let rows: Vec<SparseVec> = refs.iter().map(|d| vectorizer.transform(d)).collect();
    let (params, report) = train_logistic(
        &rows,
        &dataset.labels(),
        vec![0.0; vectorizer.len() + 1],
        l2_strength,
        0.0,
        config,
    );
    let bias = params[vectorizer.len()];
    let mut weights = params;
    weights.pop();
    Ok((
        TfidfLogReg {
            vectorizer,
            weights,
            bias,
            l2_strength,
            threshold: 0.5,
        },
        report,
    ))
}

#[derive(Deserialize)]
struct FoldRow {
    fold: usize,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

/// Per-fold metrics of an externally trained model, in fold order.
pub fn parse_fold_metrics(text: &str) -> Result<Vec<Metrics>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    if header != FOLD_METRICS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, found {}", FOLD_METRICS_HEADER.join(","), header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<FoldRow>().enumerate() {
        let r = rec?;
        for (name, v) in [("accuracy", r.accuracy), ("precision", r.precision), ("recall", r.recall), ("f1", r.f1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("{name} = {v} outside [0, 1]"),
                });
            }
        }
        rows.push(r);
    }
    if rows.is_empty() {
        return Err(Error::EmptyCorpus("fold metrics file has no rows".into()));
    }
    rows.sort_by_key(|r| r.fold);
    if let Some(w) = rows.windows(2).find(|w| w[0].fold == w[1].fold) {
        return Err(Error::InvalidArgument(format!("fold {} listed twice", w[0].fold)));
    }
    Ok(rows
        .into_iter()
        .map(|r| Metrics {
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        })
        .collect())
}

pub fn load_fold_metrics(path: impl AsRef<Path>) -> Result<Vec<Metrics>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fold_metrics(&text)
}
