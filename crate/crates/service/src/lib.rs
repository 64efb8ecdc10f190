//! HTTP front end for the recommendation pipeline.
//!
//! Routes, all JSON:
//!
//! - `POST /v1/parse`: findings plus a summary of the retrieval context
//! - `POST /v1/recommend`: a recommendation or an abstention, both `200`
//! - `POST /v1/whatif`: baseline and modified arms with sub-score deltas
//! - `GET /v1/kg/nodes/{id}`: a node and its incident edges
//! - `GET /v1/health`: load status and the active configuration
//!
//! The graph and classifier are loaded once and never mutated; handlers keep
//! no per-request state.

use std::sync::{Arc, OnceLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::extract::{DefaultBodyLimit, Request, State};
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;

use dentkg::{fixtures, EngineConfig, KgError, KnowledgeGraph, SafetyClassifier};

pub mod api;
pub mod config;
pub mod error;

pub use config::{ConfigError, ServiceConfig, Weights};
pub use error::{ApiError, ErrorCode};

/// The immutable model state every handler reads.
#[derive(Debug)]
pub struct Engine {
    pub graph: KnowledgeGraph,
    pub classifier: SafetyClassifier,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("loading graph: {0}")]
    Graph(#[from] KgError),
    #[error("reading classifier {path}: {msg}")]
    Classifier { path: String, msg: String },
    #[error("training classifier: {0}")]
    Training(String),
}

impl Engine {
    /// Loads the configured graph and classifier. Without a classifier file
    /// the default classifier is trained on the graph.
    pub fn load(config: &ServiceConfig) -> Result<Engine, LoadError> {
        let graph = match &config.kg_path {
            Some(p) => KnowledgeGraph::load(p)?,
            None => fixtures::kg_dental(),
        };
        let classifier = match &config.classifier_path {
            Some(p) => {
                let err = |msg: String| LoadError::Classifier {
                    path: p.display().to_string(),
                    msg,
                };
                let text = std::fs::read_to_string(p).map_err(|e| err(e.to_string()))?;
                serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
            }
            None => SafetyClassifier::train_default(&graph).map_err(|e| LoadError::Training(e.to_string()))?,
        };
        Ok(Engine { graph, classifier })
    }
}

#[derive(Debug)]
struct Shared {
    config: ServiceConfig,
    engine_config: EngineConfig,
    engine: OnceLock<Engine>,
}

/// Cheap to clone; all clones see the same engine once it is installed.
#[derive(Debug, Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// A state whose engine is still loading. Model routes answer `503`
    /// until [`AppState::install`] is called.
    pub fn loading(config: ServiceConfig) -> Result<Self, ConfigError> {
        let engine_config = config.engine_config()?;
        Ok(AppState {
            shared: Arc::new(Shared {
                config,
                engine_config,
                engine: OnceLock::new(),
            }),
        })
    }

    pub fn ready(config: ServiceConfig, engine: Engine) -> Result<Self, ConfigError> {
        let state = Self::loading(config)?;
        state.install(engine);
        Ok(state)
    }

    /// Returns false if an engine was already installed.
    pub fn install(&self, engine: Engine) -> bool {
        self.shared.engine.set(engine).is_ok()
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.shared.engine.get()
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.shared.config
    }

    pub fn engine_config(&self) -> EngineConfig {
        self.shared.engine_config
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config().body_limit_bytes;
    Router::new()
        .route("/v1/parse", post(api::parse))
        .route("/v1/recommend", post(api::recommend))
        .route("/v1/whatif", post(api::whatif))
        .route("/v1/kg/nodes/{id}", get(api::kg_node))
        .route("/v1/health", get(api::health))
        .fallback(api::unknown_route)
        .layer(DefaultBodyLimit::max(limit))
        .layer(middleware::from_fn_with_state(state.clone(), request_log))
        .with_state(state)
}

async fn request_log(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if !state.config().request_log {
        return next.run(req).await;
    }
    let method = req.method().to_string();
    let path = req.uri().path().to_owned();
    let started = Instant::now();
    let response = next.run(req).await;
    let ts_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let line = serde_json::json!({
        "ts_ms": ts_ms,
        "method": method,
        "path": path,
        "status": response.status().as_u16(),
        "elapsed_us": started.elapsed().as_micros() as u64,
    });
    println!("{line}");
    response
}
