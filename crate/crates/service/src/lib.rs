//! HTTP moderation service.
//!
//! Endpoints:
//! - `POST /v1/moderate` with `{"community", "title", "body"}` returns the
//!   probability, the decision and the per-topic breakdown.
//! - `GET /v1/health` returns `{"status": "ok", "model_version": ...}`.
//! - `GET /v1/model` describes the loaded model.
//!
//! Models are loaded (and checked against the provider) before the listener
//! is bound, so a service that answers health checks always has a model.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crcm_core::embeddings::{EmbeddingProvider, ProviderSpec};
use crcm_core::model::{model_from_json, predict_text, CrcmModel};
use crcm_core::{Error, Result};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicBreakdown {
    pub topic_id: usize,
    pub score: f64,
    pub weight: f64,
    pub top_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationResponse {
    pub probability: f64,
    pub decision: bool,
    pub per_topic: Vec<TopicBreakdown>,
    pub model_version: String,
}

/// A model file together with the hash that identifies it.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: CrcmModel,
    /// SHA-256 of the file bytes.
    pub version: String,
    pub path: PathBuf,
}

impl LoadedModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let version = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes).map_err(|_| Error::NotModelFile)?;
        Ok(LoadedModel {
            model: model_from_json(&text)?,
            version,
            path: path.to_path_buf(),
        })
    }

    /// Loads and checks the model against the provider dimension. A
    /// threshold override replaces the stored threshold.
    pub fn load_for(path: impl AsRef<Path>, provider_dim: usize, threshold: Option<f64>) -> Result<Self> {
        let mut loaded = Self::load(path)?;
        if loaded.model.dim() != provider_dim {
            return Err(Error::ModelDimension {
                model: loaded.model.dim(),
                provider: provider_dim,
            });
        }
        if let Some(t) = threshold {
            check_threshold(t)?;
            loaded.model.threshold = t;
        }
        Ok(loaded)
    }
}

pub fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("threshold {t} must be in (0, 1)")))
    }
}

/// Scores one post. Both the CLI and the HTTP handler go through here.
pub fn moderate<P: EmbeddingProvider + ?Sized>(
    loaded: &LoadedModel,
    provider: &P,
    title: &str,
    body: &str,
) -> Result<ModerationResponse> {
    let p = predict_text(&loaded.model, title, body, provider)?;
    let per_topic = loaded
        .model
        .rule_matrix
        .topics()
        .iter()
        .zip(p.topic_scores.iter().zip(&p.weights))
        .map(|(t, (&score, &weight))| TopicBreakdown {
            topic_id: t.topic_id,
            score,
            weight,
            top_words: t.source.words.clone(),
        })
        .collect();
    Ok(ModerationResponse {
        probability: p.probability,
        decision: p.decision,
        per_topic,
        model_version: loaded.version.clone(),
    })
}

/// Service configuration, as TOML or JSON.
///
/// ```toml
/// bind = "127.0.0.1:8080"
/// model = "model.json"
/// threshold = 0.5          # optional override
///
/// [provider]
/// kind = "hash"
/// dim = 768
///
/// [communities]            # optional per-community models
/// fashion = "fashion.json"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub model: PathBuf,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub provider: ProviderSpec,
    #[serde(default)]
    pub communities: BTreeMap<String, PathBuf>,
}

fn default_bind() -> String {
    DEFAULT_BIND.into()
}

impl ServiceConfig {
    pub fn new(model: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            bind: default_bind(),
            model: model.into(),
            threshold: None,
            provider: ProviderSpec::default(),
            communities: BTreeMap::new(),
        }
    }

    /// Parses JSON when the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            toml::from_str(text).map_err(|e| Error::Parse {
                line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
                message: e.message().to_owned(),
            })
        }
    }

    /// Reads a config file; relative model and cache paths resolve against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.model);
        cfg.communities.values_mut().for_each(resolve);
        if let Some(c) = cfg.provider.cache.as_mut() {
            resolve(c);
        }
        Ok(cfg)
    }
}

/// Immutable state shared by all requests.
pub struct AppState {
    pub default: Arc<LoadedModel>,
    pub communities: BTreeMap<String, Arc<LoadedModel>>,
    pub provider: Arc<dyn EmbeddingProvider>,
}

impl AppState {
    pub fn load(cfg: &ServiceConfig) -> Result<Self> {
        let provider: Arc<dyn EmbeddingProvider> = Arc::from(cfg.provider.build()?);
        Self::with_provider(cfg, provider)
    }

    pub fn with_provider(cfg: &ServiceConfig, provider: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        let dim = provider.dimension();
        let default = Arc::new(LoadedModel::load_for(&cfg.model, dim, cfg.threshold)?);
        let communities = cfg
            .communities
            .iter()
            .map(|(c, p)| Ok((c.clone(), Arc::new(LoadedModel::load_for(p, dim, cfg.threshold)?))))
            .collect::<Result<_>>()?;
        Ok(AppState {
            default,
            communities,
            provider,
        })
    }

    pub fn model_for(&self, community: &str) -> &Arc<LoadedModel> {
        self.communities.get(community).unwrap_or(&self.default)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/moderate", post(moderate_handler))
        .route("/v1/health", get(health_handler))
        .route("/v1/model", get(model_handler))
        .with_state(state)
}

struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn bad_request(message: String, field: Option<&str>) -> Self {
        let mut body = json!({ "error": message });
        if let Some(f) = field {
            body["field"] = json!(f);
        }
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn is_provider_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Transport(_)
            | Error::Status { .. }
            | Error::BadResponse(_)
            | Error::BatchItem { .. }
            | Error::DimensionMismatch { .. }
            | Error::Io { .. }
    )
}

/// Pulls `community`, `title` and `body` out of a JSON object, naming the
/// first missing or mistyped field.
pub fn parse_request(raw: &[u8]) -> std::result::Result<(String, String, String), (String, Option<&'static str>)> {
    let value: Value = serde_json::from_slice(raw).map_err(|e| (format!("invalid JSON: {e}"), None))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ("request body must be a JSON object".to_owned(), None))?;
    let text = |field: &'static str, required: bool| match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        None if !required => Ok(String::new()),
        None => Err((format!("missing field \"{field}\""), Some(field))),
        Some(_) => Err((format!("field \"{field}\" must be a string"), Some(field))),
    };
    let community = text("community", true)?;
    let title = text("title", true)?;
    if title.trim().is_empty() {
        return Err(("field \"title\" must not be empty".into(), Some("title")));
    }
    let body = text("body", false)?;
    Ok((community, title, body))
}

async fn moderate_handler(State(state): State<Arc<AppState>>, raw: Bytes) -> std::result::Result<Json<ModerationResponse>, ApiError> {
    let (community, title, body) =
        parse_request(&raw).map_err(|(msg, field)| ApiError::bad_request(msg, field))?;
    let loaded = state.model_for(&community).clone();
    let provider = state.provider.clone();
    let result = tokio::task::spawn_blocking(move || moderate(&loaded, &*provider, &title, &body))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: json!({ "error": format!("worker failed: {e}") }),
        })?;
    result.map(Json).map_err(|e| {
        let status = if is_provider_failure(&e) {
            StatusCode::BAD_GATEWAY
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        log::warn!("moderation failed: {e}");
        ApiError {
            status,
            body: json!({ "error": e.to_string() }),
        }
    })
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_version": state.default.version }))
}

fn describe(loaded: &LoadedModel) -> Value {
    let m = &loaded.model;
    json!({
        "K": m.k(),
        "dim": m.dim(),
        "aggregation": m.aggregation,
        "threshold": m.threshold,
        "provider": m.provider,
        "model_version": loaded.version,
        "topics": m.topic_summaries(),
    })
}

async fn model_handler(State(state): State<Arc<AppState>>) -> Json<Value> {
    let mut v = describe(&state.default);
    let communities: BTreeMap<&String, Value> = state.communities.iter().map(|(c, l)| (c, describe(l))).collect();
    v["communities"] = json!(communities);
    Json(v)
}

/// Serves `state` on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Loads every model, then binds and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<()> {
    let state = tokio::task::spawn_blocking({
        let cfg = cfg.clone();
        move || AppState::load(&cfg)
    })
    .await
    .map_err(|e| Error::InvalidArgument(format!("model loading failed: {e}")))??;
    let addr: SocketAddr = cfg
        .bind
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("bad bind address {:?}: {e}", cfg.bind)))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Io {
        path: PathBuf::from(&cfg.bind),
        source: e,
    })?;
    log::info!(
        "serving model {} ({}) on {}",
        cfg.model.display(),
        state.default.version,
        listener.local_addr().map(|a| a.to_string()).unwrap_or_default()
    );
    serve_on(listener, Arc::new(state), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(|e| Error::Io {
        path: PathBuf::from(&cfg.bind),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_fields() {
        let ok = parse_request(br#"{"community":"c","title":"t","body":"b"}"#).unwrap();
        assert_eq!(ok, ("c".into(), "t".into(), "b".into()));
        let no_body = parse_request(br#"{"community":"c","title":"t"}"#).unwrap();
        assert_eq!(no_body.2, "");
        let (msg, field) = parse_request(br#"{"community":"c","body":"b"}"#).unwrap_err();
        assert_eq!(field, Some("title"));
        assert!(msg.contains("title"));
        assert_eq!(parse_request(br#"{"title":"x"}"#).unwrap_err().1, Some("community"));
        assert_eq!(parse_request(br#"{"community":"c","title":"  "}"#).unwrap_err().1, Some("title"));
        assert_eq!(parse_request(br#"{"community":"c","title":5}"#).unwrap_err().1, Some("title"));
        assert_eq!(parse_request(b"[1]").unwrap_err().1, None);
        assert_eq!(parse_request(b"{oops").unwrap_err().1, None);
    }

    #[test]
    fn config_formats() {
        let toml_cfg = ServiceConfig::parse(
            "model = \"m.json\"\nthreshold = 0.6\n[provider]\nkind = \"hash\"\ndim = 32\n[communities]\nfashion = \"f.json\"\n",
        )
        .unwrap();
        assert_eq!(toml_cfg.bind, DEFAULT_BIND);
        assert_eq!(toml_cfg.provider.dim, 32);
        assert_eq!(toml_cfg.threshold, Some(0.6));
        assert_eq!(toml_cfg.communities["fashion"], PathBuf::from("f.json"));
        let json_cfg = ServiceConfig::parse(r#"{"model": "m.json", "bind": "0.0.0.0:9000"}"#).unwrap();
        assert_eq!(json_cfg.provider, ProviderSpec::default());
        assert_eq!(json_cfg.bind, "0.0.0.0:9000");
        assert!(ServiceConfig::parse("bind = 3").is_err());
        assert!(ServiceConfig::parse("model = \"m\"\nmystery = 1").is_err());
    }

    #[test]
    fn thresholds() {
        assert!(check_threshold(0.5).is_ok());
        assert!(check_threshold(0.0).is_err());
        assert!(check_threshold(1.0).is_err());
    }
}
