//! Fixed-dimension text embeddings behind one provider trait.
//!
//! * [`HashingEmbedder`] is deterministic and offline; it signs and hashes
//!   tokens and token bigrams into `d` buckets.
//! * [`RemoteEmbedder`] posts texts to an external encoder service that
//!   returns pooled `[CLS]`-style vectors.
//! * [`CachedProvider`] wraps either one with an append-only on-disk log.

mod cache;
mod hashing;
mod remote;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use cache::CachedProvider;
pub use hashing::HashingEmbedder;
pub use remote::RemoteEmbedder;

/// Default embedding width, matching BERT-base hidden size.
pub const DEFAULT_DIM: usize = 768;

/// A finite real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadResponse(format!(
                "non-finite embedding entry at position {i}"
            )));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Identity used for cache keys and recorded in model files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderIdentity {
    pub name: String,
    pub version: String,
    pub dim: usize,
}

impl std::fmt::Display for ProviderIdentity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{} (d={})", self.name, self.version, self.dim)
    }
}

/// A source of text embeddings. Implementations must be deterministic: the
/// same text always maps to the same vector.
pub trait EmbeddingProvider: Send + Sync {
    fn identity(&self) -> ProviderIdentity;

    fn dimension(&self) -> usize {
        self.identity().dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;

    /// Embeds a single word as a standalone text.
    fn embed_word(&self, word: &str) -> Result<EmbeddingVector> {
        if word.trim().is_empty() {
            return Err(Error::InvalidArgument("cannot embed an empty word".into()));
        }
        self.embed_text(word)
    }

    /// Element `i` equals `embed_text(texts[i])`. A failure is reported as
    /// [`Error::BatchItem`] carrying the failing index.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.embed_text(t).map_err(|e| Error::BatchItem {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn identity(&self) -> ProviderIdentity {
        (**self).identity()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed_text(text)
    }
    fn embed_word(&self, word: &str) -> Result<EmbeddingVector> {
        (**self).embed_word(word)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn identity(&self) -> ProviderIdentity {
        (**self).identity()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed_text(text)
    }
    fn embed_word(&self, word: &str) -> Result<EmbeddingVector> {
        (**self).embed_word(word)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<P> {
    fn identity(&self) -> ProviderIdentity {
        (**self).identity()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed_text(text)
    }
    fn embed_word(&self, word: &str) -> Result<EmbeddingVector> {
        (**self).embed_word(word)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

/// Convenience: `provider.embed_text(text)`.
pub fn embed_text<P: EmbeddingProvider + ?Sized>(provider: &P, text: &str) -> Result<EmbeddingVector> {
    provider.embed_text(text)
}

pub fn embed_word<P: EmbeddingProvider + ?Sized>(provider: &P, word: &str) -> Result<EmbeddingVector> {
    provider.embed_word(word)
}

pub fn embed_batch<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    texts: &[&str],
) -> Result<Vec<EmbeddingVector>> {
    provider.embed_batch(texts)
}

/// Wraps `provider` with a persistent cache at `path`.
pub fn cached<P: EmbeddingProvider>(provider: P, path: impl AsRef<std::path::Path>) -> Result<CachedProvider<P>> {
    CachedProvider::open(provider, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Hash,
    Remote,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hash" => Ok(ProviderKind::Hash),
            "remote" => Ok(ProviderKind::Remote),
            other => Err(Error::InvalidArgument(format!(
                "unknown provider {other:?} (expected hash or remote)"
            ))),
        }
    }
}

/// Declarative provider choice, as read from flags or a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub dim: usize,
    /// Hash seed for the hashing provider.
    pub seed: u64,
    pub endpoint: Option<String>,
    /// Model name reported by the remote encoder; part of its identity.
    pub model: String,
    pub cache: Option<std::path::PathBuf>,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec {
            kind: ProviderKind::Hash,
            dim: DEFAULT_DIM,
            seed: 0,
            endpoint: None,
            model: "encoder".into(),
            cache: None,
        }
    }
}

impl ProviderSpec {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let base: Box<dyn EmbeddingProvider> = match self.kind {
            ProviderKind::Hash => Box::new(HashingEmbedder::new(self.dim, self.seed)?),
            ProviderKind::Remote => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("remote provider needs an endpoint".into()))?;
                if self.dim == 0 {
                    return Err(Error::InvalidArgument("dimension must be >= 1".into()));
                }
                Box::new(RemoteEmbedder::new(endpoint, self.dim, self.model.clone()))
            }
        };
        match &self.cache {
            Some(path) => Ok(Box::new(CachedProvider::open(base, path)?)),
            None => Ok(base),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::testing::StubProvider;
    use super::*;

    #[test]
    fn vector_rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![f64::INFINITY]).is_err());
        assert!(EmbeddingVector::new(vec![0.0, -2.0]).is_ok());
    }

    #[test]
    fn default_batch_matches_singles_and_reports_index() {
        let p = StubProvider::new(3);
        let out = p.embed_batch(&["a", "b"]).unwrap();
        assert_eq!(out, vec![p.embed_text("a").unwrap(), p.embed_text("b").unwrap()]);
        assert!(p.embed_batch(&[]).unwrap().is_empty());

        let err = p.embed_batch(&["a", "b", "c", "FAIL", "d"]).unwrap_err();
        assert!(matches!(err, Error::BatchItem { index: 3, .. }), "{err}");
        assert!(err.to_string().contains("element 3"));
    }

    #[test]
    fn embed_word_requires_non_empty() {
        let p = StubProvider::new(2);
        assert!(p.embed_word("").is_err());
        assert!(p.embed_word(" ").is_err());
        assert_eq!(p.embed_word("spam").unwrap(), p.embed_text("spam").unwrap());
    }

    #[test]
    fn provider_spec_builds_each_kind() {
        let spec: ProviderSpec = serde_json::from_str(r#"{"dim": 16, "seed": 3}"#).unwrap();
        assert_eq!(spec.kind, ProviderKind::Hash);
        let p = spec.build().unwrap();
        assert_eq!(p.identity(), HashingEmbedder::new(16, 3).unwrap().identity());
        assert_eq!(p.embed_text("x y").unwrap(), HashingEmbedder::new(16, 3).unwrap().embed_text("x y").unwrap());

        let remote = ProviderSpec {
            kind: ProviderKind::Remote,
            ..Default::default()
        };
        assert!(remote.build().is_err());
        let remote = ProviderSpec {
            endpoint: Some("http://127.0.0.1:9".into()),
            ..remote
        };
        assert_eq!(remote.build().unwrap().dimension(), DEFAULT_DIM);

        assert!(serde_json::from_str::<ProviderSpec>(r#"{"dims": 16}"#).is_err());
        assert!("bert".parse::<ProviderKind>().is_err());
        assert_eq!("remote".parse::<ProviderKind>().unwrap(), ProviderKind::Remote);
    }

    #[test]
    fn provider_spec_wraps_cache() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ProviderSpec {
            dim: 8,
            cache: Some(dir.path().join("cache.jsonl")),
            ..Default::default()
        };
        let p = spec.build().unwrap();
        let v = p.embed_text("cached text").unwrap();
        assert_eq!(v, HashingEmbedder::new(8, 0).unwrap().embed_text("cached text").unwrap());
        assert!(std::fs::metadata(dir.path().join("cache.jsonl")).unwrap().len() > 0);
    }
}
