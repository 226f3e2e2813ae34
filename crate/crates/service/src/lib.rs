//! HTTP/JSON API over the embex engine: model registry, similarity and
//! analogy queries, t-SNE and training jobs, and session graphs.
//!
//! There is no authentication. CORS is open so a browser front end served
//! from another origin can call the API.

pub mod api;
pub mod error;
pub mod graphs;
pub mod jobs;
pub mod registry;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use error::{ApiError, ApiResult};
pub use graphs::GraphStore;
pub use jobs::{JobHandle, JobKind, JobPool, JobState};
pub use registry::{
    CorpusSource, CorpusSpec, CorpusStore, ModelFilter, ModelRegistry, ModelSpec, ModelState,
    RegistryConfig, RegistryEntry,
};

pub const DEFAULT_PORT: u16 = 8642;
pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_JOB_WORKERS: usize = 2;
/// Upper bound on `k` for neighbor queries.
pub const MAX_K: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// `models.json` to load at startup.
    pub models_config: Option<PathBuf>,
    /// Persist graphs as JSON files here.
    pub graph_dir: Option<PathBuf>,
    /// Save trained models here; otherwise they live only in memory.
    pub model_dir: Option<PathBuf>,
    pub job_workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: DEFAULT_HOST.to_string(),
            port: DEFAULT_PORT,
            models_config: None,
            graph_dir: None,
            model_dir: None,
            job_workers: DEFAULT_JOB_WORKERS,
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by `EMBEX_HOST`, `EMBEX_PORT`, `EMBEX_MODELS`,
    /// `EMBEX_GRAPH_DIR`, `EMBEX_MODEL_DIR` and `EMBEX_JOB_WORKERS`.
    pub fn from_env() -> Result<Self, String> {
        let mut cfg = ServiceConfig::default();
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(h) = var("EMBEX_HOST") {
            cfg.host = h;
        }
        if let Some(p) = var("EMBEX_PORT") {
            cfg.port = p.parse().map_err(|_| format!("EMBEX_PORT: invalid port {p:?}"))?;
        }
        if let Some(w) = var("EMBEX_JOB_WORKERS") {
            cfg.job_workers = w
                .parse()
                .map_err(|_| format!("EMBEX_JOB_WORKERS: invalid count {w:?}"))?;
        }
        cfg.models_config = var("EMBEX_MODELS").map(PathBuf::from);
        cfg.graph_dir = var("EMBEX_GRAPH_DIR").map(PathBuf::from);
        cfg.model_dir = var("EMBEX_MODEL_DIR").map(PathBuf::from);
        Ok(cfg)
    }
}

#[derive(Debug)]
pub struct Inner {
    pub models: ModelRegistry,
    pub corpora: CorpusStore,
    pub jobs: JobPool,
    pub graphs: GraphStore,
    pub model_dir: Option<PathBuf>,
}

/// Shared handle passed to every request handler.
#[derive(Debug, Clone)]
pub struct AppState(pub Arc<Inner>);

impl std::ops::Deref for AppState {
    type Target = Inner;

    fn deref(&self) -> &Inner {
        &self.0
    }
}

impl AppState {
    /// Empty registry, in-memory graphs.
    pub fn new(job_workers: usize) -> Self {
        AppState(Arc::new(Inner {
            models: ModelRegistry::new(),
            corpora: CorpusStore::default(),
            jobs: JobPool::new(job_workers),
            graphs: GraphStore::in_memory(),
            model_dir: None,
        }))
    }

    /// Builds the state described by `cfg`, loading every configured model.
    /// Models that fail to load stay registered in the failed state.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, String> {
        let graphs = match &cfg.graph_dir {
            Some(dir) => GraphStore::persistent(dir.clone())
                .map_err(|e| format!("{}: {e}", dir.display()))?,
            None => GraphStore::in_memory(),
        };
        let state = AppState(Arc::new(Inner {
            models: ModelRegistry::new(),
            corpora: CorpusStore::default(),
            jobs: JobPool::new(cfg.job_workers),
            graphs,
            model_dir: cfg.model_dir.clone(),
        }));
        if let Some(path) = &cfg.models_config {
            let reg = RegistryConfig::from_file(path)?;
            for spec in &reg.models {
                log::info!("loading model {} from {}", spec.id, spec.path.display());
                if !state.models.load_spec(spec) {
                    return Err(format!("duplicate model id {:?}", spec.id));
                }
            }
            for c in reg.corpora {
                if !state.corpora.insert(&c.id, CorpusSource::File(c.path)) {
                    return Err(format!("duplicate corpus id {:?}", c.id));
                }
            }
        }
        Ok(state)
    }
}

/// Serves the API until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> Result<(), String> {
    let state = tokio::task::spawn_blocking({
        let cfg = cfg.clone();
        move || AppState::from_config(&cfg)
    })
    .await
    .map_err(|e| e.to_string())??;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|e| format!("bad listen address {}:{}: {e}", cfg.host, cfg.port))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| format!("cannot bind {addr}: {e}"))?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| e.to_string())
}
