use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use embex_core::graphx::GraphError;
use embex_core::simquery::QueryError;
use serde_json::{json, Map, Value};

/// An error response: HTTP status plus a JSON body whose `error` field is a
/// stable machine-readable code.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub extra: Map<String, Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            extra: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.extra.insert(key.to_string(), value.into());
        self
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn missing(param: &str) -> Self {
        Self::bad_request("missing_parameter", format!("missing parameter {param:?}"))
            .with("parameter", param)
    }

    pub fn unknown_model(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_model", format!("no model {id:?}"))
            .with("model_id", id)
    }

    pub fn unknown_job(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_job", format!("no job {id:?}")).with("job_id", id)
    }

    pub fn unknown_graph(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_graph", format!("no graph {id:?}"))
            .with("graph_id", id)
    }

    pub fn out_of_vocabulary(token: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "out_of_vocabulary",
            format!("token {token:?} is not in the vocabulary"),
        )
        .with("token", token)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::OutOfVocabulary(t) => ApiError::out_of_vocabulary(&t),
            QueryError::InvalidK => ApiError::bad_request("invalid_k", e.to_string()),
            QueryError::ZeroVector => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "zero_vector", e.to_string())
            }
            QueryError::NoCandidates => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_candidates", e.to_string())
            }
            QueryError::LengthMismatch(..) => ApiError::bad_request("length_mismatch", e.to_string()),
        }
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::OutOfVocabulary(t) => ApiError::out_of_vocabulary(&t),
            GraphError::NodeNotInGraph(ref t) => {
                ApiError::new(StatusCode::NOT_FOUND, "node_not_in_graph", e.to_string())
                    .with("token", t.as_str())
            }
            GraphError::NodeCapExceeded => {
                ApiError::new(StatusCode::CONFLICT, "node_cap_exceeded", e.to_string())
            }
            GraphError::InvalidN => ApiError::bad_request("invalid_n", e.to_string()),
            GraphError::Query(q) => q.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = self.extra;
        body.insert("error".into(), json!(self.code));
        body.insert("message".into(), json!(self.message));
        (self.status, Json(Value::Object(body))).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
