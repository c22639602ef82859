use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, EmbeddingVector, ProviderIdentity};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Record {
    key: String,
    d: usize,
    values: Vec<f64>,
}

/// Persistent embedding cache: an append-only JSONL log of
/// `{"key", "d", "values"}` records. Keys hash the provider identity together
/// with the text, so a provider version change misses. When a key appears more
/// than once the last record wins.
pub struct CachedProvider<P> {
    inner: P,
    identity: ProviderIdentity,
    path: PathBuf,
    entries: RwLock<HashMap<String, EmbeddingVector>>,
    log: Mutex<File>,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn open(inner: P, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let identity = inner.identity();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                match serde_json::from_str::<Record>(&line) {
                    Ok(rec) if rec.values.len() == rec.d => match EmbeddingVector::new(rec.values) {
                        Ok(v) => {
                            entries.insert(rec.key, v);
                        }
                        Err(e) => log::warn!("{}:{}: dropping cache entry: {e}", path.display(), i + 1),
                    },
                    Ok(rec) => log::warn!(
                        "{}:{}: dropping cache entry {}: declares d={} but holds {} values",
                        path.display(),
                        i + 1,
                        rec.key,
                        rec.d,
                        rec.values.len()
                    ),
                    Err(e) => log::warn!("{}:{}: dropping corrupt cache line: {e}", path.display(), i + 1),
                }
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(CachedProvider {
            inner,
            identity,
            path,
            entries: RwLock::new(entries),
            log: Mutex::new(log),
        })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(&self, text: &str) -> String {
        let mut h = Sha256::new();
        for part in [self.identity.name.as_bytes(), self.identity.version.as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        h.update((self.identity.dim as u64).to_le_bytes());
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    /// Returns the cached vector if present and of the right dimension.
    fn lookup(&self, key: &str) -> Option<EmbeddingVector> {
        let entries = self.entries.read().expect("cache lock");
        match entries.get(key) {
            Some(v) if v.dim() == self.identity.dim => Some(v.clone()),
            Some(v) => {
                log::warn!(
                    "{}: cache entry {key} has d={} (expected {}); recomputing",
                    self.path.display(),
                    v.dim(),
                    self.identity.dim
                );
                None
            }
            None => None,
        }
    }

    fn store(&self, key: String, v: &EmbeddingVector) -> Result<()> {
        let rec = Record {
            key,
            d: v.dim(),
            values: v.as_slice().to_vec(),
        };
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        {
            let mut log = self.log.lock().expect("cache log lock");
            log.write_all(line.as_bytes())
                .and_then(|_| log.flush())
                .map_err(|e| Error::io(&self.path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(rec.key, v.clone());
        Ok(())
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn identity(&self) -> ProviderIdentity {
        self.identity.clone()
    }

    fn dimension(&self) -> usize {
        self.identity.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let key = self.key(text);
        if let Some(v) = self.lookup(&key) {
            return Ok(v);
        }
        let v = self.inner.embed_text(text)?;
        self.store(key, &v)?;
        Ok(v)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let keys: Vec<String> = texts.iter().map(|t| self.key(t)).collect();
        let mut out: Vec<Option<EmbeddingVector>> = keys.iter().map(|k| self.lookup(k)).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let miss_texts: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let fresh = self.inner.embed_batch(&miss_texts).map_err(|e| match e {
                Error::BatchItem { index, source } => Error::BatchItem {
                    index: missing[index],
                    source,
                },
                other => other,
            })?;
            for (&i, v) in missing.iter().zip(fresh) {
                self.store(keys[i].clone(), &v)?;
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}
