//! Routes and request handlers. Every handler resolves its inputs, calls one
//! engine function and serializes the result unchanged.

use std::collections::HashSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use embex_core::simquery::{self, QueryOptions};
use embex_core::trainer::{self, Side, TrainProgress};
use embex_core::tsne::{self, TsneProgress};
use embex_core::vstore::{self, EmbeddingModel, ModelFormat};
use embex_core::{FeatureKind, SimilarityGraph, TrainConfig, TsneConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::error::{ApiError, ApiResult};
use crate::jobs::{JobKind, JobState, Progress};
use crate::registry::{self, CorpusSource, Lookup, ModelFilter, ModelSpec};
use crate::{AppState, MAX_K};

const DEFAULT_K: usize = 10;
const BODY_LIMIT: usize = 256 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/models", get(list_models).post(register_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/vector", get(vector))
        .route("/models/{id}/similar", get(similar))
        .route("/models/{id}/analogy", get(analogy))
        .route("/models/{id}/tsne", post(start_tsne))
        .route("/compare", get(compare))
        .route("/jobs", get(list_jobs))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/result", get(job_result))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .route("/corpora", get(list_corpora).post(register_corpus))
        .route("/train", post(start_training))
        .route("/graphs", get(list_graphs).post(create_graph))
        .route("/graphs/{id}", get(get_graph))
        .route("/graphs/{id}/expand", post(expand_graph))
        .route("/graphs/{id}/add", post(add_to_graph))
        .fallback(not_found)
        .layer(axum::extract::DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

// ------------------------------------------------------------ extractors

/// JSON body whose rejections are reported as 400 with an error code. The
/// content type is not checked.
pub struct ApiJson<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(e.status(), "unreadable_body", e.body_text()))?;
        serde_json::from_slice(&bytes).map(ApiJson).map_err(|e| {
            let code = match e.classify() {
                serde_json::error::Category::Data => "invalid_body",
                _ => "malformed_json",
            };
            ApiError::bad_request(code, e.to_string())
        })
    }
}

/// Query string with 400 rejections.
pub struct ApiQuery<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| ApiQuery(q.0))
            .map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))
    }
}

// ------------------------------------------------------------ helpers

fn model(state: &AppState, id: &str) -> ApiResult<Arc<EmbeddingModel>> {
    match state.models.get(id) {
        Lookup::Ready(m) => Ok(m),
        Lookup::NotReady(s) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "model_not_ready",
            format!("model {id:?} is {}", json!(s).as_str().unwrap_or("unavailable")),
        )
        .with("model_id", id)
        .with("state", json!(s))),
        Lookup::Missing => Err(ApiError::unknown_model(id)),
    }
}

fn required<T>(value: Option<T>, name: &str) -> ApiResult<T> {
    value.ok_or_else(|| ApiError::missing(name))
}

fn check_k(k: Option<usize>) -> ApiResult<usize> {
    match k.unwrap_or(DEFAULT_K) {
        0 => Err(ApiError::bad_request("invalid_k", "k must be at least 1")),
        k => Ok(k.min(MAX_K)),
    }
}

/// Runs CPU-bound query work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn created<T: Serialize>(body: T) -> Response {
    (StatusCode::CREATED, Json(body)).into_response()
}

fn accepted<T: Serialize>(body: T) -> Response {
    (StatusCode::ACCEPTED, Json(body)).into_response()
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

// ------------------------------------------------------------ models

async fn list_models(
    State(state): State<AppState>,
    ApiQuery(filter): ApiQuery<ModelFilter>,
) -> Json<Vec<registry::RegistryEntry>> {
    Json(state.models.entries(&filter))
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    state
        .models
        .entry(&id)
        .map(|e| Json(e).into_response())
        .ok_or_else(|| ApiError::unknown_model(&id))
}

/// Registers a model file; loading continues in the background.
async fn register_model(
    State(state): State<AppState>,
    ApiJson(spec): ApiJson<ModelSpec>,
) -> ApiResult<Response> {
    if spec.id.is_empty() {
        return Err(ApiError::bad_request("invalid_body", "model id must not be empty"));
    }
    if !state.models.reserve(&spec.id, &spec.path.display().to_string()) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "duplicate_id",
            format!("model id {:?} is taken", spec.id),
        ));
    }
    let entry = state.models.entry(&spec.id).expect("just reserved");
    let bg = state.clone();
    tokio::task::spawn_blocking(move || match registry::load_model(&spec) {
        Ok(m) => bg.models.set_ready(&spec.id, Arc::new(m)),
        Err(e) => bg.models.set_failed(&spec.id, e.to_string()),
    });
    Ok(accepted(entry))
}

#[derive(Debug, Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VectorResponse {
    pub token: String,
    pub vector: Vec<f32>,
}

async fn vector(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<TokenQuery>,
) -> ApiResult<Json<VectorResponse>> {
    let m = model(&state, &id)?;
    let token = required(q.token, "token")?;
    let row = simquery::resolve(&m, &token, QueryOptions::for_model(&m))?;
    Ok(Json(VectorResponse {
        token: m.token(row).to_string(),
        vector: m.row(row).to_vec(),
    }))
}

#[derive(Debug, Deserialize)]
struct SimilarQuery {
    token: Option<String>,
    k: Option<usize>,
}

async fn similar(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<SimilarQuery>,
) -> ApiResult<Response> {
    let m = model(&state, &id)?;
    let token = required(q.token, "token")?;
    let k = check_k(q.k)?;
    let hits = blocking(move || {
        Ok(simquery::top_k_similar(&m, &token, k, QueryOptions::for_model(&m))?)
    })
    .await?;
    Ok(Json(hits).into_response())
}

#[derive(Debug, Deserialize)]
struct AnalogyQuery {
    a: Option<String>,
    b: Option<String>,
    c: Option<String>,
    k: Option<usize>,
}

async fn analogy(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<AnalogyQuery>,
) -> ApiResult<Response> {
    let m = model(&state, &id)?;
    let a = required(q.a, "a")?;
    let b = required(q.b, "b")?;
    let c = required(q.c, "c")?;
    let k = check_k(q.k)?;
    let ans = blocking(move || {
        Ok(simquery::analogy(&m, &a, &b, &c, k, QueryOptions::for_model(&m))?)
    })
    .await?;
    Ok(Json(ans).into_response())
}

#[derive(Debug, Deserialize)]
struct CompareQuery {
    wordform_model: Option<String>,
    lemma_model: Option<String>,
    wordform: Option<String>,
    lemma: Option<String>,
    k: Option<usize>,
}

async fn compare(
    State(state): State<AppState>,
    ApiQuery(q): ApiQuery<CompareQuery>,
) -> ApiResult<Response> {
    let wf_model = model(&state, &required(q.wordform_model, "wordform_model")?)?;
    let lm_model = model(&state, &required(q.lemma_model, "lemma_model")?)?;
    let wordform = required(q.wordform, "wordform")?;
    let lemma = match q.lemma {
        Some(l) => l,
        None => wordform.clone(),
    };
    let k = check_k(q.k)?;
    let cmp = blocking(move || {
        trainer::compare_neighborhoods(&wf_model, &lm_model, &wordform, &lemma, k).map_err(
            |(side, e)| {
                ApiError::from(e).with(
                    "side",
                    match side {
                        Side::Wordform => "wordform",
                        Side::Lemma => "lemma",
                    },
                )
            },
        )
    })
    .await?;
    Ok(Json(cmp).into_response())
}

// ------------------------------------------------------------ t-SNE jobs

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsneRequest {
    pub tokens: Option<Vec<String>>,
    pub top_frequent_n: Option<usize>,
    pub similar_to: Option<String>,
    pub n: Option<usize>,
    #[serde(default)]
    pub config: TsneConfig,
}

fn bad_selection(message: impl Into<String>) -> ApiError {
    ApiError::bad_request("bad_selection", message)
}

/// Rows to lay out, in order, for a t-SNE request.
pub fn select_rows(m: &EmbeddingModel, req: &TsneRequest) -> ApiResult<Vec<usize>> {
    let modes = [
        req.tokens.is_some(),
        req.top_frequent_n.is_some(),
        req.similar_to.is_some(),
    ];
    if modes.iter().filter(|&&b| b).count() != 1 {
        return Err(bad_selection(
            "give exactly one of tokens, top_frequent_n or similar_to with n",
        ));
    }
    if req.n.is_some() && req.similar_to.is_none() {
        return Err(bad_selection("n only applies to similar_to"));
    }
    let opts = QueryOptions::for_model(m);
    let rows = if let Some(tokens) = &req.tokens {
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        for t in tokens {
            let r = simquery::resolve(m, t, opts)?;
            if seen.insert(r) {
                rows.push(r);
            }
        }
        rows
    } else if let Some(n) = req.top_frequent_n {
        if n == 0 || n > m.len() {
            return Err(bad_selection(format!(
                "top_frequent_n must be in 1..={}",
                m.len()
            )));
        }
        (0..n).collect()
    } else {
        let query = req.similar_to.as_deref().unwrap_or_default();
        let n = req
            .n
            .ok_or_else(|| bad_selection("similar_to needs n"))?;
        if n == 0 {
            return Err(bad_selection("n must be at least 1"));
        }
        let center = simquery::resolve(m, query, opts)?;
        let hits = simquery::top_k_similar(m, m.token(center), n, QueryOptions { case_fallback: false })?;
        std::iter::once(center)
            .chain(hits.iter().map(|h| m.index_of(&h.token).expect("neighbor is in the model")))
            .collect()
    };
    Ok(rows)
}

async fn start_tsne(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<TsneRequest>,
) -> ApiResult<Response> {
    let m = model(&state, &id)?;
    let rows = select_rows(&m, &req)?;
    req.config
        .validate(rows.len())
        .map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
    let tokens: Vec<String> = rows.iter().map(|&r| m.token(r).to_string()).collect();
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| m.row(r).iter().map(|&v| f64::from(v)).collect())
        .collect();
    let tracker = Arc::new(TsneProgress::new());
    let config = req.config;
    let progress = Progress::Tsne {
        tracker: Arc::clone(&tracker),
        n_iter: config.n_iter,
    };
    let handle = state.jobs.submit(JobKind::Tsne, progress, move || {
        let layout = tsne::embed(&x, &tokens, &config, Some(&tracker)).map_err(|e| e.to_string())?;
        serde_json::to_value(layout).map_err(|e| e.to_string())
    });
    Ok(accepted(handle))
}

// ------------------------------------------------------------ jobs

async fn list_jobs(State(state): State<AppState>) -> Response {
    Json(state.jobs.list()).into_response()
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    state
        .jobs
        .handle(&id)
        .map(|h| Json(h).into_response())
        .ok_or_else(|| ApiError::unknown_job(&id))
}

async fn job_result(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (job_state, result, error) = state.jobs.result(&id).ok_or_else(|| ApiError::unknown_job(&id))?;
    match job_state {
        JobState::Done => Ok(Json(result.expect("done jobs hold a result").as_ref().clone()).into_response()),
        JobState::Failed => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "job_failed",
            error.unwrap_or_default(),
        )
        .with("job_id", id.as_str())),
        pending => Err(ApiError::new(
            StatusCode::CONFLICT,
            "job_not_finished",
            format!("job {id:?} is still {}", json!(pending).as_str().unwrap_or("")),
        )
        .with("job_id", id.as_str())),
    }
}

async fn cancel_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    state
        .jobs
        .cancel(&id)
        .map(|h| Json(h).into_response())
        .ok_or_else(|| ApiError::unknown_job(&id))
}

// ------------------------------------------------------------ training

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRequest {
    id: String,
    path: Option<std::path::PathBuf>,
    text: Option<String>,
}

async fn register_corpus(
    State(state): State<AppState>,
    ApiJson(req): ApiJson<CorpusRequest>,
) -> ApiResult<Response> {
    let source = match (req.path, req.text) {
        (Some(p), None) => CorpusSource::File(p),
        (None, Some(t)) => CorpusSource::Inline(Arc::new(t)),
        _ => {
            return Err(ApiError::bad_request(
                "invalid_body",
                "give exactly one of path or text",
            ))
        }
    };
    if req.id.is_empty() {
        return Err(ApiError::bad_request("invalid_body", "corpus id must not be empty"));
    }
    if !state.corpora.insert(&req.id, source) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "duplicate_id",
            format!("corpus id {:?} is taken", req.id),
        ));
    }
    Ok(created(json!({"id": req.id})))
}

async fn list_corpora(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.corpora.ids())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub corpus_ref: String,
    #[serde(default)]
    pub feature: FeatureKind,
    #[serde(default)]
    pub config: TrainConfig,
    /// Registry id of the trained model; derived from the corpus and feature
    /// when absent.
    pub model_id: Option<String>,
}

async fn start_training(
    State(state): State<AppState>,
    ApiJson(req): ApiJson<TrainRequest>,
) -> ApiResult<Response> {
    let corpus = state.corpora.get(&req.corpus_ref).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_corpus",
            format!("no corpus {:?}", req.corpus_ref),
        )
        .with("corpus_ref", req.corpus_ref.as_str())
    })?;
    req.config
        .validate()
        .map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;

    let model_path = |id: &str| match &state.model_dir {
        Some(dir) => dir.join(format!("{id}.bin")).display().to_string(),
        None => format!("memory:{id}"),
    };
    let model_id = match req.model_id {
        Some(id) => {
            if !state.models.reserve(&id, &model_path(&id)) {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "duplicate_id",
                    format!("model id {id:?} is taken"),
                ));
            }
            id
        }
        None => {
            let base = format!("{}-{}", req.corpus_ref, req.feature);
            let mut n = 1;
            loop {
                let id = if n == 1 { base.clone() } else { format!("{base}-{n}") };
                if state.models.reserve(&id, &model_path(&id)) {
                    break id;
                }
                n += 1;
            }
        }
    };

    let tracker = Arc::new(TrainProgress::new());
    let bg = state.clone();
    let (feature, config) = (req.feature, req.config);
    let progress = Progress::Train(Arc::clone(&tracker));
    let handle = state.jobs.submit(JobKind::Train, progress, move || {
        let outcome = train_job(&bg, &corpus, feature, &config, &tracker, &model_id);
        match outcome {
            Ok(m) => {
                let info = m.info();
                bg.models.set_ready(&model_id, Arc::new(m));
                Ok(json!({"model_id": model_id, "info": info}))
            }
            Err(e) => {
                bg.models.set_failed(&model_id, e.clone());
                Err(e)
            }
        }
    });
    Ok(accepted(handle))
}

fn train_job(
    state: &AppState,
    corpus: &CorpusSource,
    feature: FeatureKind,
    config: &TrainConfig,
    progress: &TrainProgress,
    model_id: &str,
) -> Result<EmbeddingModel, String> {
    let sentences = match corpus {
        CorpusSource::File(path) => {
            let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
            trainer::load_corpus(std::io::BufReader::new(file), feature)
        }
        CorpusSource::Inline(text) => trainer::load_corpus(text.as_bytes(), feature),
    }
    .map_err(|e| e.to_string())?;
    let model = trainer::train_with_progress(&sentences, feature, config, Some(progress))
        .map_err(|e| e.to_string())?;
    if let Some(dir) = &state.model_dir {
        let path = dir.join(format!("{model_id}.bin"));
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        vstore::save(&model, &path, ModelFormat::Binary).map_err(|e| e.to_string())?;
    }
    registry::warm(&model);
    Ok(model)
}

// ------------------------------------------------------------ graphs

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateGraph {
    model_id: String,
    center: String,
    n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphOp {
    token: String,
    #[serde(default)]
    n: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedGraph {
    pub graph_id: String,
    pub graph: SimilarityGraph,
}

async fn create_graph(
    State(state): State<AppState>,
    ApiJson(req): ApiJson<CreateGraph>,
) -> ApiResult<Response> {
    let m = model(&state, &req.model_id)?;
    let graph = blocking(move || {
        let center = simquery::resolve(&m, &req.center, QueryOptions::for_model(&m))?;
        Ok(SimilarityGraph::build_star(
            req.model_id.as_str(),
            &m,
            m.token(center),
            req.n,
        )?)
    })
    .await?;
    let (graph_id, _) = state
        .graphs
        .insert(graph.clone())
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(created(CreatedGraph { graph_id, graph }))
}

async fn list_graphs(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.graphs.ids())
}

async fn get_graph(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let slot = state.graphs.get(&id).ok_or_else(|| ApiError::unknown_graph(&id))?;
    let g = slot.lock().await;
    Ok(Json(&*g).into_response())
}

#[derive(Clone, Copy)]
enum Mutation {
    Expand,
    Add,
}

async fn mutate_graph(state: AppState, id: String, op: GraphOp, kind: Mutation) -> ApiResult<Response> {
    let slot = state.graphs.get(&id).ok_or_else(|| ApiError::unknown_graph(&id))?;
    let mut guard = slot.lock_owned().await;
    let m = model(&state, &guard.provenance().model_id.clone())?;
    let bg = state.clone();
    blocking(move || {
        match kind {
            Mutation::Expand => guard.expand_node(&m, &op.token, required(op.n, "n")?)?,
            Mutation::Add => guard.add_word(&m, &op.token, op.n.unwrap_or(0))?,
        }
        bg.graphs
            .persist(&id, &guard)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Json(&*guard).into_response())
    })
    .await
}

async fn expand_graph(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiJson(op): ApiJson<GraphOp>,
) -> ApiResult<Response> {
    mutate_graph(state, id, op, Mutation::Expand).await
}

async fn add_to_graph(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiJson(op): ApiJson<GraphOp>,
) -> ApiResult<Response> {
    mutate_graph(state, id, op, Mutation::Add).await
}
