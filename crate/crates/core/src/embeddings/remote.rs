use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, EmbeddingVector, ProviderIdentity};
use crate::{Error, Result};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
    #[allow(dead_code)]
    model: String,
}

/// Client for an external encoder service.
///
/// `POST {endpoint}/embed` with `{"texts": [...]}`; the service answers
/// `{"vectors": [[...], ...], "dim": d, "model": "..."}`.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    model: String,
    max_batch: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize, model: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        RemoteEmbedder {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            dim,
            model: model.into(),
            max_batch: 64,
            agent,
        }
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/embed", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::Status { status, body });
        }
        let parsed: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::BadResponse(e.to_string()))?;
        if parsed.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: parsed.dim,
            });
        }
        if parsed.vectors.len() != texts.len() {
            return Err(Error::BadResponse(format!(
                "expected {} vectors, got {}",
                texts.len(),
                parsed.vectors.len()
            )));
        }
        Ok(parsed.vectors)
    }

    fn check(&self, values: Vec<f64>) -> Result<EmbeddingVector> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        EmbeddingVector::new(values)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity {
            name: "remote".into(),
            version: self.model.clone(),
            dim: self.dim,
        }
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let mut vectors = self.request(&[text])?;
        self.check(vectors.pop().expect("length checked"))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for (chunk_no, chunk) in texts.chunks(self.max_batch).enumerate() {
            let offset = chunk_no * self.max_batch;
            let vectors = self.request(chunk).map_err(|e| Error::BatchItem {
                index: offset,
                source: Box::new(e),
            })?;
            for (i, v) in vectors.into_iter().enumerate() {
                out.push(self.check(v).map_err(|e| Error::BatchItem {
                    index: offset + i,
                    source: Box::new(e),
                })?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// Serves `responses.len()` HTTP requests, replying with each (status,
    /// body-fn) in turn and sending the request bodies back over a channel.
    fn serve(
        responses: Vec<(u16, Box<dyn Fn(&serde_json::Value) -> String + Send>)>,
    ) -> (String, mpsc::Receiver<serde_json::Value>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body_fn) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let reply = body_fn(&req);
                tx.send(req).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                    reply.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}"), rx)
    }

    fn vectors_for(req: &serde_json::Value, dim: usize) -> String {
        let texts = req["texts"].as_array().unwrap();
        let vectors: Vec<Vec<f64>> = texts
            .iter()
            .map(|t| {
                let n = t.as_str().unwrap().len() as f64;
                (0..dim).map(|j| n + j as f64 * 0.5).collect()
            })
            .collect();
        serde_json::json!({"vectors": vectors, "dim": dim, "model": "stub-bert"}).to_string()
    }

    #[test]
    fn embeds_over_the_wire() {
        let (url, rx) = serve(vec![(200, Box::new(|r| vectors_for(r, 3)))]);
        let p = RemoteEmbedder::new(url, 3, "stub-bert");
        let v = p.embed_text("abcd").unwrap();
        assert_eq!(v.as_slice(), &[4.0, 4.5, 5.0]);
        assert_eq!(rx.recv().unwrap(), serde_json::json!({"texts": ["abcd"]}));
    }

    #[test]
    fn batches_in_chunks() {
        let (url, rx) = serve(vec![
            (200, Box::new(|r| vectors_for(r, 2))),
            (200, Box::new(|r| vectors_for(r, 2))),
        ]);
        let p = RemoteEmbedder::new(url, 2, "m").with_max_batch(2);
        let out = p.embed_batch(&["a", "bb", "ccc"]).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].as_slice(), &[3.0, 3.5]);
        assert_eq!(rx.recv().unwrap()["texts"].as_array().unwrap().len(), 2);
        assert_eq!(rx.recv().unwrap()["texts"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn non_success_status_is_error() {
        let (url, _rx) = serve(vec![(503, Box::new(|_| "{\"error\":\"busy\"}".into()))]);
        let err = RemoteEmbedder::new(url, 3, "m").embed_text("x").unwrap_err();
        assert!(matches!(err, Error::Status { status: 503, .. }), "{err}");
    }

    #[test]
    fn declared_dimension_mismatch_is_error() {
        let (url, _rx) = serve(vec![(200, Box::new(|r| vectors_for(r, 4)))]);
        let err = RemoteEmbedder::new(url, 3, "m").embed_text("x").unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 4 }), "{err}");
    }

    #[test]
    fn bad_vector_reports_batch_index() {
        let (url, _rx) = serve(vec![(
            200,
            Box::new(|_| {
                serde_json::json!({
                    "vectors": [[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [1.0], [1.0, 2.0]],
                    "dim": 2, "model": "m"
                })
                .to_string()
            }),
        )]);
        let err = RemoteEmbedder::new(url, 2, "m")
            .embed_batch(&["a", "b", "c", "d", "e"])
            .unwrap_err();
        assert!(matches!(err, Error::BatchItem { index: 3, .. }), "{err}");
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = RemoteEmbedder::new(format!("http://{addr}"), 2, "m")
            .embed_text("x")
            .unwrap_err();
        assert!(matches!(err, Error::Transport(_)), "{err}");
    }
}
