//! Rule-topic embeddings: each topic becomes the probability-weighted sum of
//! its top-word embeddings, and the ordered list of those vectors is the rule
//! matrix every classifier is conditioned on.

use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingProvider, EmbeddingVector};
use crate::topics::TopicSummary;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTopicEmbedding {
    pub topic_id: usize,
    pub vector: EmbeddingVector,
    pub source: TopicSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMatrix {
    topics: Vec<RuleTopicEmbedding>,
}

impl RuleMatrix {
    /// Sorts by topic id and checks the ids are exactly `0..K` and the
    /// vectors share one dimension.
    pub fn new(mut topics: Vec<RuleTopicEmbedding>) -> Result<Self> {
        if topics.is_empty() {
            return Err(Error::InvalidArgument("rule matrix needs at least one topic".into()));
        }
        topics.sort_by_key(|t| t.topic_id);
        for (i, t) in topics.iter().enumerate() {
            if t.topic_id != i {
                return Err(Error::InvalidArgument(format!(
                    "topic ids must be 0..{}, found {} at position {i}",
                    topics.len(),
                    t.topic_id
                )));
            }
        }
        let dim = topics[0].vector.dim();
        if let Some(t) = topics.iter().find(|t| t.vector.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: t.vector.dim(),
            });
        }
        Ok(RuleMatrix { topics })
    }

    pub fn topics(&self) -> &[RuleTopicEmbedding] {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.topics[0].vector.dim()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        self.topics[k].vector.as_slice()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.topics.iter().map(|t| t.vector.as_slice())
    }
}

/// `h_k = sum_i p_i e_i` over the summary's words. The result is not
/// renormalized.
pub fn topic_embedding<P: EmbeddingProvider + ?Sized>(
    summary: &TopicSummary,
    provider: &P,
) -> Result<RuleTopicEmbedding> {
    if summary.words.len() != summary.probs.len() || summary.words.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "topic {} has {} words and {} probabilities",
            summary.topic_id,
            summary.words.len(),
            summary.probs.len()
        )));
    }
    let mass: f64 = summary.probs.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "topic {} probabilities sum to {mass}, expected 1",
            summary.topic_id
        )));
    }
    let dim = provider.dimension();
    let mut acc = vec![0.0; dim];
    for (word, &p) in summary.words.iter().zip(&summary.probs) {
        let e = provider.embed_word(word)?;
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: e.dim(),
            });
        }
        for (a, v) in acc.iter_mut().zip(e.as_slice()) {
            *a += p * v;
        }
    }
    Ok(RuleTopicEmbedding {
        topic_id: summary.topic_id,
        vector: EmbeddingVector::new(acc)?,
        source: summary.clone(),
    })
}

pub fn build_rule_matrix<P: EmbeddingProvider + ?Sized>(
    summaries: &[TopicSummary],
    provider: &P,
) -> Result<RuleMatrix> {
    let topics = summaries
        .iter()
        .map(|s| topic_embedding(s, provider))
        .collect::<Result<Vec<_>>>()?;
    RuleMatrix::new(topics)
}
