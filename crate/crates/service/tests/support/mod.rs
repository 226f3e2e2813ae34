#![allow(dead_code)]

use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use embex_core::vstore::{read_text, EmbeddingModel, FeatureKind, ModelMeta};
use embex_service::{router, AppState};
use http_body_util::BodyExt;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde_json::Value;
use tower::ServiceExt;

pub const TOY: &str = "8 3\n\
anglia 0.9 0.1 0.2\n\
franța 0.8 0.2 0.25\n\
scoția 0.85 0.05 0.3\n\
londra 0.1 0.9 0.1\n\
paris 0.05 0.85 0.2\n\
britanie 0.88 0.12 0.22\n\
Anglia -0.2 0.3 0.9\n\
nimic 0 0 0\n";

pub fn toy_model() -> EmbeddingModel {
    read_text(TOY.as_bytes()).unwrap()
}

pub fn with_kind(m: EmbeddingModel, kind: FeatureKind, threshold: u64) -> EmbeddingModel {
    let meta = ModelMeta {
        feature_kind: kind,
        frequency_threshold: threshold,
        ..m.meta().clone()
    };
    EmbeddingModel::new(m.tokens().to_vec(), m.matrix().to_vec(), meta).unwrap()
}

/// Gaussian model with `n` rows named `w0..`.
pub fn gaussian_model(seed: u64, n: usize, dim: usize) -> EmbeddingModel {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let matrix: Vec<f32> = (0..n * dim).map(|_| r.sample(StandardNormal)).collect();
    let tokens = (0..n).map(|i| format!("w{i}")).collect();
    EmbeddingModel::new(tokens, matrix, ModelMeta::unknown(dim)).unwrap()
}

pub struct TestApp {
    pub state: AppState,
    pub app: Router,
}

impl TestApp {
    pub fn new(models: Vec<(&str, EmbeddingModel)>) -> Self {
        let state = AppState::new(2);
        for (id, m) in models {
            assert!(state.models.insert(id, &format!("memory:{id}"), m));
        }
        Self::from_state(state)
    }

    pub fn from_state(state: AppState) -> Self {
        let app = router(state.clone());
        TestApp { state, app }
    }

    pub async fn send(&self, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (s, b) = self.send("GET", uri, None).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    pub async fn post(&self, uri: &str, body: &Value) -> (StatusCode, Value) {
        let (s, b) = self.send("POST", uri, Some(&body.to_string())).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    /// GET that must succeed, decoded into `T`.
    pub async fn get_as<T: DeserializeOwned>(&self, uri: &str) -> T {
        let (s, b) = self.send("GET", uri, None).await;
        assert_eq!(s, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&b));
        serde_json::from_slice(&b).unwrap()
    }

    /// Polls a job until it leaves the pending/running states.
    pub async fn wait_job(&self, id: &str, limit: Duration) -> Value {
        let start = Instant::now();
        loop {
            let (s, v) = self.get(&format!("/jobs/{id}")).await;
            assert_eq!(s, StatusCode::OK);
            if v["state"] == "done" || v["state"] == "failed" {
                return v;
            }
            assert!(start.elapsed() < limit, "job {id} still {}", v["state"]);
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}

/// Percent-encodes a query value.
pub fn enc(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub struct LatencyReport {
    pub samples: Vec<Duration>,
    /// Whether the background job was still running after the last query.
    pub job_still_running: bool,
    pub job_iteration_at_start: u64,
}

impl LatencyReport {
    pub fn max(&self) -> Duration {
        self.samples.iter().copied().max().unwrap_or_default()
    }

    pub fn median(&self) -> Duration {
        let mut s = self.samples.clone();
        s.sort();
        s[s.len() / 2]
    }
}

/// Serves a `vocab`×`dim` Gaussian model, starts a t-SNE job over its top
/// `layout_n` rows and times `queries` /similar requests while the job runs.
pub async fn similar_latency_under_tsne(vocab: usize, dim: usize, layout_n: usize, queries: usize) -> LatencyReport {
    let model = tokio::task::spawn_blocking(move || gaussian_model(42, vocab, dim)).await.unwrap();
    let t = tokio::task::spawn_blocking(move || TestApp::new(vec![("big", model)])).await.unwrap();
    let body = serde_json::json!({"top_frequent_n": layout_n, "config": {"n_iter": 100000}});
    let (status, job) = t.post("/models/big/tsne", &body).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{job}");
    let id = job["id"].as_str().unwrap().to_string();

    let start = Instant::now();
    let job_iteration_at_start = loop {
        let (_, v) = t.get(&format!("/jobs/{id}")).await;
        let it = v["progress"]["iteration"].as_u64().unwrap_or(0);
        if v["state"] == "running" && it > 0 {
            break it;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "t-SNE job never started: {v}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    };

    let mut samples = Vec::with_capacity(queries);
    for q in 0..queries {
        let uri = format!("/models/big/similar?token=w{}&k=10", (q * 7919) % vocab);
        let t0 = Instant::now();
        let (status, body) = t.send("GET", &uri, None).await;
        samples.push(t0.elapsed());
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        let hits: Vec<serde_json::Value> = serde_json::from_slice(&body).unwrap();
        assert_eq!(hits.len(), 10);
    }
    let (_, v) = t.get(&format!("/jobs/{id}")).await;
    let job_still_running = v["state"] == "running";
    t.post(&format!("/jobs/{id}/cancel"), &serde_json::json!({})).await;
    t.wait_job(&id, Duration::from_secs(120)).await;
    LatencyReport {
        samples,
        job_still_running,
        job_iteration_at_start,
    }
}
