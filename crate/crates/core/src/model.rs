//! The rule-conditioned classifier.
//!
//! For a post embedding `h_c` and rule-topic embeddings `h_1..h_K`, topic `k`
//! scores `s_k = sigmoid(W_k [h_c; h_k] + b_k)`. Scores are combined as
//! `p = sum_k w_k s_k`, where the weights are either uniform (soft voting) or
//! `softmax_k(cos(h_c, h_k))` (affiliation voting). Training minimizes mean
//! binary cross-entropy of the combined `p` plus `mu * sum_k (|W_k|^2 + b_k^2)`
//! with Adam. Affiliation weights depend only on embeddings and are constants
//! with respect to the parameters.

use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{content_of, Dataset, Post};
use crate::embeddings::{dot, EmbeddingProvider, EmbeddingVector, ProviderIdentity};
use crate::optim::{bce, shuffled_batches, sigmoid, Adam, AdamConfig, Dropout, SparseVec};
use crate::rules::{RuleMatrix, RuleTopicEmbedding};
use crate::topics::TopicSummary;
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "crcm/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    SoftVote,
    Affiliation,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::SoftVote => "soft_vote",
            Aggregation::Affiliation => "affiliation",
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft_vote" => Ok(Aggregation::SoftVote),
            "affiliation" => Ok(Aggregation::Affiliation),
            other => Err(Error::InvalidArgument(format!(
                "unknown aggregation {other:?} (expected soft_vote or affiliation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicClassifier {
    /// `2d` weights applied to `[h_c; h_k]`.
    #[serde(rename = "w")]
    pub weights: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: f64,
}

impl TopicClassifier {
    pub fn zeros(dim: usize) -> Self {
        TopicClassifier {
            weights: vec![0.0; 2 * dim],
            bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 strength on all classifier parameters.
    pub mu: f64,
    pub dropout: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Tie every topic classifier to one shared parameter vector.
    pub shared_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 32,
            mu: 1e-4,
            dropout: 0.2,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            shared_weights: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad("mu must be >= 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return bad("Adam betas must be in [0, 1) and epsilon > 0");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Cosine similarity; 0 when either vector is all zeros.
pub fn affiliation(h_c: &[f64], h_k: &[f64]) -> f64 {
    let nc = dot(h_c, h_c).sqrt();
    let nk = dot(h_k, h_k).sqrt();
    if nc == 0.0 || nk == 0.0 {
        return 0.0;
    }
    (dot(h_c, h_k) / (nc * nk)).clamp(-1.0, 1.0)
}

/// Max-shifted softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn affiliation_weights(h_c: &[f64], rules: &RuleMatrix) -> Vec<f64> {
    let scores: Vec<f64> = rules.vectors().map(|h_k| affiliation(h_c, h_k)).collect();
    softmax(&scores)
}

pub fn uniform_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// `sum_k w_k s_k`; `None` means equal weights.
pub fn aggregate(scores: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    match weights {
        None => {
            if scores.is_empty() {
                return Err(Error::InvalidArgument("no scores to aggregate".into()));
            }
            let w = 1.0 / scores.len() as f64;
            Ok(scores.iter().map(|s| w * s).sum())
        }
        Some(w) => {
            if w.len() != scores.len() {
                return Err(Error::LengthMismatch {
                    left: scores.len(),
                    right: w.len(),
                });
            }
            let mass: f64 = w.iter().sum();
            if (mass - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("weights sum to {mass}, expected 1")));
            }
            Ok(scores.iter().zip(w).map(|(s, w)| w * s).sum())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub decision: bool,
    pub topic_scores: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrcmModel {
    pub classifiers: Vec<TopicClassifier>,
    pub rule_matrix: RuleMatrix,
    pub aggregation: Aggregation,
    pub threshold: f64,
    pub dropout: f64,
    pub provider: ProviderIdentity,
}

impl CrcmModel {
    /// Zero-initialized classifiers over `rule_matrix`.
    pub fn new(rule_matrix: RuleMatrix, provider: ProviderIdentity, aggregation: Aggregation) -> Result<Self> {
        if rule_matrix.dim() != provider.dim {
            return Err(Error::DimensionMismatch {
                expected: provider.dim,
                got: rule_matrix.dim(),
            });
        }
        let dim = rule_matrix.dim();
        Ok(CrcmModel {
            classifiers: vec![TopicClassifier::zeros(dim); rule_matrix.len()],
            rule_matrix,
            aggregation,
            threshold: 0.5,
            dropout: TrainConfig::default().dropout,
            provider,
        })
    }

    pub fn k(&self) -> usize {
        self.classifiers.len()
    }

    pub fn dim(&self) -> usize {
        self.rule_matrix.dim()
    }

    pub fn num_params(&self) -> usize {
        self.k() * (2 * self.dim() + 1)
    }

    /// Flat parameters: for each topic, its `2d` weights then its bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for c in &self.classifiers {
            out.extend_from_slice(&c.weights);
            out.push(c.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params());
        let stride = 2 * self.dim() + 1;
        for (c, chunk) in self.classifiers.iter_mut().zip(params.chunks(stride)) {
            c.weights.copy_from_slice(&chunk[..stride - 1]);
            c.bias = chunk[stride - 1];
        }
    }

    fn check_dim(&self, h_c: &[f64]) -> Result<()> {
        if h_c.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: h_c.len(),
            });
        }
        Ok(())
    }

    fn logit(&self, h_c: &[f64], k: usize) -> f64 {
        let d = self.dim();
        let c = &self.classifiers[k];
        dot(&c.weights[..d], h_c) + dot(&c.weights[d..], self.rule_matrix.vector(k)) + c.bias
    }

    pub fn score_topic(&self, h_c: &[f64], k: usize) -> Result<f64> {
        self.check_dim(h_c)?;
        if k >= self.k() {
            return Err(Error::InvalidArgument(format!("topic {k} out of range 0..{}", self.k())));
        }
        Ok(sigmoid(self.logit(h_c, k)))
    }

    pub fn voting_weights(&self, h_c: &[f64]) -> Vec<f64> {
        match self.aggregation {
            Aggregation::SoftVote => uniform_weights(self.k()),
            Aggregation::Affiliation => affiliation_weights(h_c, &self.rule_matrix),
        }
    }

    pub fn predict_embedding(&self, h_c: &[f64]) -> Result<Prediction> {
        self.check_dim(h_c)?;
        let topic_scores: Vec<f64> = (0..self.k()).map(|k| sigmoid(self.logit(h_c, k))).collect();
        let weights = self.voting_weights(h_c);
        let probability = match self.aggregation {
            Aggregation::SoftVote => aggregate(&topic_scores, None)?,
            Aggregation::Affiliation => aggregate(&topic_scores, Some(&weights))?,
        };
        Ok(Prediction {
            probability,
            decision: probability >= self.threshold,
            topic_scores,
            weights,
        })
    }

    pub fn probability(&self, h_c: &[f64]) -> Result<f64> {
        Ok(self.predict_embedding(h_c)?.probability)
    }

    pub fn topic_summaries(&self) -> Vec<&TopicSummary> {
        self.rule_matrix.topics().iter().map(|t| &t.source).collect()
    }
}

fn check_provider(model: &CrcmModel, provider_dim: usize) -> Result<()> {
    if model.dim() != provider_dim {
        return Err(Error::ModelDimension {
            model: model.dim(),
            provider: provider_dim,
        });
    }
    Ok(())
}

pub fn predict<P: EmbeddingProvider + ?Sized>(model: &CrcmModel, post: &Post, provider: &P) -> Result<Prediction> {
    predict_text(model, &post.title, &post.body, provider)
}

/// Scores `title + " " + body`.
pub fn predict_text<P: EmbeddingProvider + ?Sized>(
    model: &CrcmModel,
    title: &str,
    body: &str,
    provider: &P,
) -> Result<Prediction> {
    check_provider(model, provider.dimension())?;
    let h_c = provider.embed_text(&content_of(title, body))?;
    model.predict_embedding(h_c.as_slice())
}

/// Objective over `(h_c, label)` pairs with dropout disabled.
pub fn loss(model: &CrcmModel, batch: &[(&[f64], bool)], mu: f64) -> f64 {
    loss_and_gradient(model, batch, mu).0
}

/// Objective and its exact gradient with respect to [`CrcmModel::params`],
/// with dropout disabled.
pub fn loss_and_gradient(model: &CrcmModel, batch: &[(&[f64], bool)], mu: f64) -> (f64, Vec<f64>) {
    let data = TrainingSet::new(model, batch.iter().map(|(h, _)| *h));
    let labels: Vec<bool> = batch.iter().map(|(_, y)| *y).collect();
    let params = model.params();
    let mut grads = vec![0.0; params.len()];
    let order: Vec<usize> = (0..batch.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let loss = data.batch_objective(
        &params,
        &order,
        &labels,
        mu,
        Dropout::new(0.0),
        &mut rng,
        &mut grads,
    );
    (loss, grads)
}

/// Precomputed sparse inputs for one model and a set of posts.
struct TrainingSet {
    dim: usize,
    k: usize,
    posts: Vec<SparseVec>,
    rules: Vec<SparseVec>,
    weights: Vec<Vec<f64>>,
}

impl TrainingSet {
    fn new<'a>(model: &CrcmModel, embeddings: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut posts = Vec::new();
        let mut weights = Vec::new();
        for h in embeddings {
            posts.push(SparseVec::from_dense(h));
            weights.push(model.voting_weights(h));
        }
        TrainingSet {
            dim: model.dim(),
            k: model.k(),
            posts,
            rules: model.rule_matrix.vectors().map(SparseVec::from_dense).collect(),
            weights,
        }
    }

    /// Mean BCE over `batch` plus the L2 term; accumulates the gradient into
    /// `grads` (which must start zeroed).
    #[allow(clippy::too_many_arguments)]
    fn batch_objective(
        &self,
        params: &[f64],
        batch: &[usize],
        labels: &[bool],
        mu: f64,
        dropout: Dropout,
        rng: &mut ChaCha8Rng,
        grads: &mut [f64],
    ) -> f64 {
        let d = self.dim;
        let stride = 2 * d + 1;
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut scores = vec![0.0; self.k];
        let mut masks_c: Vec<Vec<f64>> = vec![Vec::new(); self.k];
        let mut masks_r: Vec<Vec<f64>> = vec![Vec::new(); self.k];

        for &i in batch {
            let x = &self.posts[i];
            let w = &self.weights[i];
            let mut p = 0.0;
            for k in 0..self.k {
                let theta = &params[k * stride..(k + 1) * stride];
                let r = &self.rules[k];
                masks_c[k].clear();
                masks_r[k].clear();
                let mut z = theta[2 * d];
                for (&j, &v) in x.idx.iter().zip(&x.val) {
                    let m = dropout.sample(rng);
                    masks_c[k].push(m);
                    z += theta[j as usize] * v * m;
                }
                for (&j, &v) in r.idx.iter().zip(&r.val) {
                    let m = dropout.sample(rng);
                    masks_r[k].push(m);
                    z += theta[d + j as usize] * v * m;
                }
                scores[k] = sigmoid(z);
                p += w[k] * scores[k];
            }
            let (l, dl_dp) = bce(p, labels[i]);
            total += l;
            if dl_dp == 0.0 {
                continue;
            }
            for k in 0..self.k {
                let gz = scale * dl_dp * w[k] * scores[k] * (1.0 - scores[k]);
                if gz == 0.0 {
                    continue;
                }
                let g = &mut grads[k * stride..(k + 1) * stride];
                let r = &self.rules[k];
                for ((&j, &v), &m) in x.idx.iter().zip(&x.val).zip(&masks_c[k]) {
                    g[j as usize] += gz * v * m;
                }
                for ((&j, &v), &m) in r.idx.iter().zip(&r.val).zip(&masks_r[k]) {
                    g[d + j as usize] += gz * v * m;
                }
                g[2 * d] += gz;
            }
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
}

/// Sums the per-topic gradient blocks and writes the sum back into every
/// block, so tied parameters receive identical updates.
fn tie_gradients(grads: &mut [f64], k: usize) {
    let stride = grads.len() / k;
    for j in 0..stride {
        let s: f64 = (0..k).map(|t| grads[t * stride + j]).sum();
        for t in 0..k {
            grads[t * stride + j] = s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean mini-batch objective per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains on precomputed post embeddings.
pub fn train_embeddings(
    model: &CrcmModel,
    embeddings: &[EmbeddingVector],
    labels: &[bool],
    config: &TrainConfig,
) -> Result<(CrcmModel, TrainReport)> {
    config.validate()?;
    if embeddings.is_empty() {
        return Err(Error::EmptyCorpus("no training examples".into()));
    }
    if embeddings.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: embeddings.len(),
            right: labels.len(),
        });
    }
    if let Some(e) = embeddings.iter().find(|e| e.dim() != model.dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: e.dim(),
        });
    }

    let data = TrainingSet::new(model, embeddings.iter().map(EmbeddingVector::as_slice));
    let mut params = model.params();
    if config.shared_weights {
        let stride = 2 * model.dim() + 1;
        let first = params[..stride].to_vec();
        for chunk in params.chunks_mut(stride) {
            chunk.copy_from_slice(&first);
        }
    }
    let mut adam = Adam::new(config.adam(), params.len());
    let mut grads = vec![0.0; params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dropout = Dropout::new(config.dropout);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let batches = shuffled_batches(labels.len(), config.batch_size, &mut rng);
        let mut sum = 0.0;
        for batch in &batches {
            grads.iter_mut().for_each(|g| *g = 0.0);
            sum += data.batch_objective(&params, batch, labels, config.mu, dropout, &mut rng, &mut grads);
            if config.shared_weights {
                tie_gradients(&mut grads, model.k());
            }
            adam.step(&mut params, &grads);
        }
        epoch_losses.push(sum / batches.len() as f64);
    }

    let mut trained = model.clone();
    trained.set_params(&params);
    trained.dropout = config.dropout;
    Ok((trained, TrainReport { epoch_losses }))
}

/// Embeds every post's content and trains.
pub fn train<P: EmbeddingProvider + ?Sized>(
    model: &CrcmModel,
    dataset: &Dataset,
    provider: &P,
    config: &TrainConfig,
) -> Result<(CrcmModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus("training dataset has no posts".into()));
    }
    check_provider(model, provider.dimension())?;
    let contents = dataset.contents();
    let refs: Vec<&str> = contents.iter().map(String::as_str).collect();
    let embeddings = provider.embed_batch(&refs)?;
    train_embeddings(model, &embeddings, &dataset.labels(), config)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    dim: usize,
    #[serde(rename = "K")]
    k: usize,
    aggregation: Aggregation,
    threshold: f64,
    dropout: f64,
    provider: ProviderIdentity,
    rule_matrix: Vec<Vec<f64>>,
    topics: Vec<TopicSummary>,
    classifiers: Vec<TopicClassifier>,
}

pub fn model_to_json(model: &CrcmModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        dim: model.dim(),
        k: model.k(),
        aggregation: model.aggregation,
        threshold: model.threshold,
        dropout: model.dropout,
        provider: model.provider.clone(),
        rule_matrix: model.rule_matrix.vectors().map(<[f64]>::to_vec).collect(),
        topics: model.topic_summaries().into_iter().cloned().collect(),
        classifiers: model.classifiers.clone(),
    };
    serde_json::to_string(&file).expect("model serializes")
}

pub fn save_model(model: &CrcmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn model_from_json(text: &str) -> Result<CrcmModel> {
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) if e.is_eof() && text.contains("\"crcm/") => {
            return Err(Error::MalformedModel(format!("truncated file: {e}")))
        }
        Err(_) => return Err(Error::NotModelFile),
    };
    match value.get("format").and_then(|f| f.as_str()) {
        Some(MODEL_FORMAT) => {}
        Some(f) if f.starts_with("crcm/") => return Err(Error::UnsupportedFormat(f.to_owned())),
        _ => return Err(Error::NotModelFile),
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::MalformedModel(e.to_string()))?;

    let malformed = |m: String| Err(Error::MalformedModel(m));
    if file.k == 0 || file.rule_matrix.len() != file.k || file.classifiers.len() != file.k || file.topics.len() != file.k {
        return malformed(format!(
            "K = {} but file holds {} rule vectors, {} topics, {} classifiers",
            file.k,
            file.rule_matrix.len(),
            file.topics.len(),
            file.classifiers.len()
        ));
    }
    if file.provider.dim != file.dim {
        return malformed(format!("provider d = {} but model d = {}", file.provider.dim, file.dim));
    }
    if let Some(v) = file.rule_matrix.iter().find(|v| v.len() != file.dim) {
        return malformed(format!("rule vector of length {} in a d = {} model", v.len(), file.dim));
    }
    if let Some(c) = file.classifiers.iter().find(|c| c.weights.len() != 2 * file.dim) {
        return malformed(format!("classifier with {} weights, expected {}", c.weights.len(), 2 * file.dim));
    }
    if !(file.threshold > 0.0 && file.threshold < 1.0) {
        return malformed(format!("threshold {} outside (0, 1)", file.threshold));
    }
    let topics = file
        .rule_matrix
        .into_iter()
        .zip(file.topics)
        .enumerate()
        .map(|(topic_id, (v, source))| {
            Ok(RuleTopicEmbedding {
                topic_id,
                vector: EmbeddingVector::new(v)?,
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrcmModel {
        classifiers: file.classifiers,
        rule_matrix: RuleMatrix::new(topics)?,
        aggregation: file.aggregation,
        threshold: file.threshold,
        dropout: file.dropout,
        provider: file.provider,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CrcmModel> {
    let path = path.as_ref();
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(text).map_err(|_| Error::NotModelFile)?;
    model_from_json(&text)
}

/// Loads and checks the model's dimension against the provider's.
pub fn load_model_for(path: impl AsRef<Path>, provider_dim: usize) -> Result<CrcmModel> {
    let model = load_model(path)?;
    check_provider(&model, provider_dim)?;
    Ok(model)
}
