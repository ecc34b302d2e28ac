//! HTTP/1.1 interface of one node.
//!
//! | route            | response                                                     |
//! |------------------|--------------------------------------------------------------|
//! | `GET /kv/{key}`  | 200 value bytes, `X-Served-By`, `X-Remote`; 404 when absent  |
//! | `PUT /kv/{key}`  | 200 `{"success":true,"path":..}`; 502 when the write failed  |
//! | `GET /meta/{key}`| 200 metadata JSON; 404 when absent                           |
//! | `GET /health`    | 200 `{"node":..,"role":"serializer"|"replica"}`              |

use std::future::Future;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;

use crate::backend::StoredValue;
use crate::node::{NodeError, NodeService};

pub const SERVED_BY: HeaderName = HeaderName::from_static("x-served-by");
pub const REMOTE: HeaderName = HeaderName::from_static("x-remote");

pub fn router(node: NodeService) -> Router {
    Router::new()
        .route("/kv/{key}", get(get_value).put(put_value))
        .route("/meta/{key}", get(get_meta))
        .route("/health", get(health))
        .with_state(node)
}

/// Serves `node` on `listener` until `shutdown` resolves.
pub async fn serve_http<F>(node: NodeService, listener: TcpListener, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(node))
        .with_graceful_shutdown(shutdown)
        .await
}

fn error_response(status: StatusCode, message: String) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn get_value(State(node): State<NodeService>, Path(key): Path<String>) -> Response {
    let result = tokio::task::spawn_blocking(move || node.fetch(&key)).await;
    match result {
        Ok(Ok(fetch)) => match fetch.value {
            Some(value) => {
                let mut resp = (StatusCode::OK, value.into_bytes()).into_response();
                let headers = resp.headers_mut();
                if let Ok(v) = HeaderValue::from_str(fetch.served_by.as_str()) {
                    headers.insert(SERVED_BY, v);
                }
                headers.insert(
                    REMOTE,
                    HeaderValue::from_static(if fetch.remote { "true" } else { "false" }),
                );
                resp
            }
            None => StatusCode::NOT_FOUND.into_response(),
        },
        Ok(Err(err @ (NodeError::Unreachable(_) | NodeError::NoReachableHost(_)))) => {
            error_response(StatusCode::BAD_GATEWAY, err.to_string())
        }
        Ok(Err(err)) => error_response(StatusCode::INTERNAL_SERVER_ERROR, err.to_string()),
        Err(join) => error_response(StatusCode::INTERNAL_SERVER_ERROR, join.to_string()),
    }
}

async fn put_value(State(node): State<NodeService>, Path(key): Path<String>, body: Bytes) -> Response {
    let value = StoredValue::new(body.to_vec());
    match tokio::task::spawn_blocking(move || node.store(&key, value)).await {
        Ok(r) if r.success => (
            StatusCode::OK,
            Json(json!({ "success": true, "path": r.path.as_str() })),
        )
            .into_response(),
        Ok(r) => (
            StatusCode::BAD_GATEWAY,
            Json(json!({ "success": false, "path": r.path.as_str(), "error": r.error })),
        )
            .into_response(),
        Err(join) => error_response(StatusCode::INTERNAL_SERVER_ERROR, join.to_string()),
    }
}

async fn get_meta(State(node): State<NodeService>, Path(key): Path<String>) -> Response {
    match node.metadata(&key) {
        Some(meta) => Json(meta).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn health(State(node): State<NodeService>) -> Response {
    let role = if node.is_serializer() { "serializer" } else { "replica" };
    Json(json!({ "node": node.id().as_str(), "role": role })).into_response()
}
