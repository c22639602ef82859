use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{EmbeddingProvider, EmbeddingVector, ProviderIdentity};
use crate::textprep::{self, STOPWORDS_VERSION};
use crate::{Error, Result};

/// Signed feature hashing over preprocessed tokens and token bigrams.
///
/// Every feature is hashed `probes` times, each probe picking a bucket in
/// `[0, d)` and a sign; the accumulated vector is L2-normalized. Texts with no
/// surviving tokens map to the zero vector.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
    probes: u32,
}

impl HashingEmbedder {
    pub const DEFAULT_PROBES: u32 = 4;

    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        Self::with_probes(dim, seed, Self::DEFAULT_PROBES)
    }

    pub fn with_probes(dim: usize, seed: u64, probes: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
        }
        if probes == 0 {
            return Err(Error::InvalidArgument("probes must be >= 1".into()));
        }
        Ok(HashingEmbedder { dim, seed, probes })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Embeds an already tokenized stream.
    pub fn embed_tokens(&self, tokens: &[String]) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dim];
        if tokens.is_empty() {
            return EmbeddingVector(acc);
        }
        for feature in textprep::ngrams(tokens, 1, 2.min(tokens.len())) {
            let mut buf = Vec::with_capacity(feature.len() + 5);
            buf.extend_from_slice(feature.as_bytes());
            buf.push(0xff);
            for j in 0..self.probes {
                buf.truncate(feature.len() + 1);
                buf.extend_from_slice(&j.to_le_bytes());
                let h = xxh3_64_with_seed(&buf, self.seed);
                let idx = ((h & 0x7fff_ffff_ffff_ffff) % self.dim as u64) as usize;
                let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
                acc[idx] += sign;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut acc {
                *v /= norm;
            }
        }
        EmbeddingVector(acc)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity {
            name: "hash".into(),
            version: format!("1-sw{STOPWORDS_VERSION}-s{}-p{}", self.seed, self.probes),
            dim: self.dim,
        }
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.embed_tokens(&textprep::preprocess(text)))
    }
}
