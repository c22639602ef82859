//! LDA over rule texts by collapsed Gibbs sampling, UMass coherence, and
//! top-word topic summaries.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::textprep::TokenStream;
use crate::{Error, Result};

pub const DEFAULT_TOP_WORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    /// Symmetric document-topic prior; `None` uses [`default_alpha`].
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn alpha_for(&self, k: usize) -> f64 {
        self.alpha.unwrap_or_else(|| default_alpha(k))
    }
}

/// `1 / K`. Rule texts are only a handful of tokens long, and the larger
/// `50 / K` prior common for long documents washes out the per-document topic
/// signal entirely at that length.
pub fn default_alpha(k: usize) -> f64 {
    1.0 / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    /// Vocabulary in lexicographic order; a word's id is its position.
    pub vocab: Vec<String>,
    /// `k x vocab.len()` topic-word probabilities.
    pub phi: Vec<Vec<f64>>,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
}

impl TopicModel {
    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.vocab.binary_search_by(|w| w.as_str().cmp(word)).ok()
    }

    /// Word ids of topic `k` by descending probability, ties broken by word.
    pub fn ranked_words(&self, k: usize) -> Vec<usize> {
        rank_row(&self.phi[k], &self.vocab)
    }
}

fn rank_row(row: &[f64], vocab: &[String]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then_with(|| vocab[a].cmp(&vocab[b])));
    ids
}

/// Collapsed Gibbs sampler state. Exposed so callers can step sweep by sweep
/// and inspect the count matrices.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    k: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    vocab: Vec<String>,
    docs: Vec<Vec<usize>>,
    assignments: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<u32>>,
    /// Row-major `k x V`.
    topic_word: Vec<u32>,
    topic_total: Vec<u32>,
    word_freq: Vec<u32>,
    rng: ChaCha8Rng,
    sweeps: usize,
    weights: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(docs: &[TokenStream], k: usize, alpha: f64, beta: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("topic count must be >= 1".into()));
        }
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidArgument("alpha and beta must be positive".into()));
        }
        let non_empty = docs.iter().filter(|d| !d.is_empty()).count();
        if non_empty == 0 {
            return Err(Error::EmptyCorpus("no document has any tokens".into()));
        }
        if non_empty < k {
            return Err(Error::InvalidArgument(format!(
                "{non_empty} non-empty documents cannot support {k} topics"
            )));
        }

        let vocab: Vec<String> = docs
            .iter()
            .flat_map(|d| d.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, usize> =
            vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let v = vocab.len();
        let docs: Vec<Vec<usize>> = docs
            .iter()
            .map(|d| d.iter().map(|w| index[w.as_str()]).collect())
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc_topic = vec![vec![0u32; k]; docs.len()];
        let mut topic_word = vec![0u32; k * v];
        let mut topic_total = vec![0u32; k];
        let mut word_freq = vec![0u32; v];
        let mut assignments = Vec::with_capacity(docs.len());
        for (d, doc) in docs.iter().enumerate() {
            let mut z = Vec::with_capacity(doc.len());
            for &w in doc {
                let t = rng.random_range(0..k);
                z.push(t);
                doc_topic[d][t] += 1;
                topic_word[t * v + w] += 1;
                topic_total[t] += 1;
                word_freq[w] += 1;
            }
            assignments.push(z);
        }

        Ok(GibbsSampler {
            k,
            alpha,
            beta,
            seed,
            vocab,
            docs,
            assignments,
            doc_topic,
            topic_word,
            topic_total,
            word_freq,
            rng,
            sweeps: 0,
            weights: vec![0.0; k],
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// `n_kw` for topic `k` and word id `w`.
    pub fn topic_word_count(&self, k: usize, w: usize) -> u32 {
        self.topic_word[k * self.vocab.len() + w]
    }

    pub fn topic_total(&self, k: usize) -> u32 {
        self.topic_total[k]
    }

    pub fn word_frequency(&self, w: usize) -> u32 {
        self.word_freq[w]
    }

    pub fn doc_topic_counts(&self, d: usize) -> &[u32] {
        &self.doc_topic[d]
    }

    /// One pass resampling every token's topic.
    pub fn sweep(&mut self) {
        let v = self.vocab.len();
        let v_beta = v as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.assignments[d][i];
                self.doc_topic[d][old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_total[old] -= 1;

                let mut total = 0.0;
                for t in 0..self.k {
                    let p = (self.doc_topic[d][t] as f64 + self.alpha)
                        * (self.topic_word[t * v + w] as f64 + self.beta)
                        / (self.topic_total[t] as f64 + v_beta);
                    total += p;
                    self.weights[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(self.k - 1);

                self.assignments[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_total[new] += 1;
            }
        }
        self.sweeps += 1;
        debug_assert!(self.counts_consistent(), "Gibbs counts diverged after sweep {}", self.sweeps);
    }

    /// Count conservation: per-word topic counts sum to corpus frequency,
    /// per-topic word counts sum to the topic total, per-document topic counts
    /// sum to document length, and all agree with the assignment vectors.
    pub fn counts_consistent(&self) -> bool {
        let v = self.vocab.len();
        let by_word = (0..v).all(|w| {
            (0..self.k).map(|t| self.topic_word[t * v + w]).sum::<u32>() == self.word_freq[w]
        });
        let by_topic = (0..self.k)
            .all(|t| self.topic_word[t * v..(t + 1) * v].iter().sum::<u32>() == self.topic_total[t]);
        let by_doc = self
            .doc_topic
            .iter()
            .zip(&self.docs)
            .all(|(c, doc)| c.iter().sum::<u32>() as usize == doc.len());
        let mut recount = vec![0u32; self.k * v];
        for (doc, z) in self.docs.iter().zip(&self.assignments) {
            for (&w, &t) in doc.iter().zip(z) {
                recount[t * v + w] += 1;
            }
        }
        by_word && by_topic && by_doc && recount == self.topic_word
    }

    /// `phi[k][w] = (n_kw + beta) / (n_k + V beta)`.
    pub fn phi(&self) -> Vec<Vec<f64>> {
        let v = self.vocab.len();
        let v_beta = v as f64 * self.beta;
        (0..self.k)
            .map(|t| {
                let denom = self.topic_total[t] as f64 + v_beta;
                (0..v)
                    .map(|w| (self.topic_word[t * v + w] as f64 + self.beta) / denom)
                    .collect()
            })
            .collect()
    }

    pub fn into_model(self) -> TopicModel {
        let phi = self.phi();
        TopicModel {
            k: self.k,
            phi,
            alpha: self.alpha,
            beta: self.beta,
            seed: self.seed,
            iterations: self.sweeps,
            vocab: self.vocab,
        }
    }
}

pub fn fit_lda(docs: &[TokenStream], k: usize, config: &LdaConfig) -> Result<TopicModel> {
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    let mut sampler = GibbsSampler::new(docs, k, config.alpha_for(k), config.beta, config.seed)?;
    for _ in 0..config.iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model())
}

/// Document frequencies and co-document frequencies over a reference corpus.
struct DocIndex<'a> {
    postings: HashMap<&'a str, Vec<usize>>,
}

impl<'a> DocIndex<'a> {
    fn new(docs: &'a [TokenStream]) -> Self {
        let mut postings: HashMap<&str, Vec<usize>> = HashMap::new();
        for (d, doc) in docs.iter().enumerate() {
            for w in doc.iter() {
                let list = postings.entry(w.as_str()).or_default();
                if list.last() != Some(&d) {
                    list.push(d);
                }
            }
        }
        DocIndex { postings }
    }

    fn df(&self, w: &str) -> usize {
        self.postings.get(w).map_or(0, Vec::len)
    }

    fn co_df(&self, a: &str, b: &str) -> usize {
        let (Some(x), Some(y)) = (self.postings.get(a), self.postings.get(b)) else {
            return 0;
        };
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
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
}

/// UMass coherence of one ranked word list:
/// `sum_{i > j} ln((D(w_i, w_j) + 1) / D(w_j))`, skipping pairs with `D(w_j) = 0`.
pub fn umass_for_words(words: &[&str], docs: &[TokenStream]) -> f64 {
    umass_indexed(words, &DocIndex::new(docs))
}

fn umass_indexed(words: &[&str], index: &DocIndex<'_>) -> f64 {
    let mut score = 0.0;
    for i in 1..words.len() {
        for j in 0..i {
            let dj = index.df(words[j]);
            if dj == 0 {
                continue;
            }
            score += ((index.co_df(words[i], words[j]) + 1) as f64 / dj as f64).ln();
        }
    }
    score
}

/// Mean UMass coherence over topics, each scored on its `top_m` best words.
pub fn coherence_umass(model: &TopicModel, docs: &[TokenStream], top_m: usize) -> f64 {
    assert!(top_m >= 2, "coherence needs at least two words per topic");
    let index = DocIndex::new(docs);
    let total: f64 = (0..model.k)
        .map(|t| {
            let words: Vec<&str> = model
                .ranked_words(t)
                .into_iter()
                .take(top_m)
                .map(|w| model.vocab[w].as_str())
                .collect();
            umass_indexed(&words, &index)
        })
        .sum();
    total / model.k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherencePoint {
    pub k: usize,
    pub coherence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSweep {
    pub points: Vec<CoherencePoint>,
    pub best_k: usize,
}

/// Highest coherence wins; ties go to the smaller K. NaN never wins.
pub fn best_topic_count(points: &[CoherencePoint]) -> Option<usize> {
    let mut best: Option<&CoherencePoint> = None;
    for p in points {
        if p.coherence.is_nan() {
            continue;
        }
        best = match best {
            Some(b) if b.coherence > p.coherence => Some(b),
            Some(b) if b.coherence == p.coherence && b.k <= p.k => Some(b),
            _ => Some(p),
        };
    }
    best.map(|p| p.k)
}

/// Fits one model per candidate K (seed `config.seed + K`) and scores each
/// against the same documents.
pub fn sweep_topic_count(
    docs: &[TokenStream],
    ks: &[usize],
    config: &LdaConfig,
    top_m: usize,
) -> Result<(TopicSweep, Vec<TopicModel>)> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument("empty topic-count range".into()));
    }
    let mut points = Vec::with_capacity(ks.len());
    let mut models = Vec::with_capacity(ks.len());
    for &k in ks {
        let cfg = LdaConfig {
            seed: config.seed.wrapping_add(k as u64),
            ..config.clone()
        };
        let model = fit_lda(docs, k, &cfg)?;
        points.push(CoherencePoint {
            k,
            coherence: coherence_umass(&model, docs, top_m),
        });
        models.push(model);
    }
    let best_k = best_topic_count(&points).unwrap_or(ks[0]);
    Ok((TopicSweep { points, best_k }, models))
}

/// A rule topic: its top words and their renormalized probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic_id: usize,
    pub words: Vec<String>,
    pub probs: Vec<f64>,
}

/// Top `top_m` words of one probability row (clamped to the row length),
/// with probabilities rescaled to sum to one.
pub fn summarize_row(topic_id: usize, vocab: &[String], row: &[f64], top_m: usize) -> TopicSummary {
    assert_eq!(vocab.len(), row.len(), "vocabulary and row lengths differ");
    let ids: Vec<usize> = rank_row(row, vocab).into_iter().take(top_m).collect();
    let mass: f64 = ids.iter().map(|&w| row[w]).sum();
    TopicSummary {
        topic_id,
        words: ids.iter().map(|&w| vocab[w].clone()).collect(),
        probs: ids.iter().map(|&w| row[w] / mass).collect(),
    }
}

pub fn summarize(model: &TopicModel, top_m: usize) -> Vec<TopicSummary> {
    (0..model.k)
        .map(|t| summarize_row(t, &model.vocab, &model.phi[t], top_m))
        .collect()
}
