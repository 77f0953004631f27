//! REST routes over [`Service`].

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{ApiError, ErrorKind};
use crate::ops::Service;

type Shared = Arc<Service>;
type Params = Query<HashMap<String, String>>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.kind.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    if body.is_empty() {
        return Err(ApiError::bad_request("empty request body"));
    }
    Ok(serde_json::from_slice(body)?)
}

fn version(params: &HashMap<String, String>) -> Result<Option<u64>, ApiError> {
    params
        .get("version")
        .map(|v| v.parse().map_err(|_| ApiError::bad_request(format!("bad version {v:?}"))))
        .transpose()
}

/// Runs blocking store work off the async executor.
async fn blocking<T, F>(svc: Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn ok<T: Serialize>(v: T) -> Response {
    Json(v).into_response()
}

async fn put_space(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let def = parse(&body)?;
    let out = blocking(svc, move |s| s.publish(&id, &def)).await?;
    let status = if out.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(out)).into_response())
}

async fn get_space(State(svc): State<Shared>, Path(id): Path<String>, Query(q): Params) -> Result<Response, ApiError> {
    let v = version(&q)?;
    blocking(svc, move |s| s.space_detail(&id, v)).await.map(ok)
}

async fn list_spaces(State(svc): State<Shared>) -> Result<Response, ApiError> {
    blocking(svc, |s| Ok(s.list_spaces())).await.map(ok)
}

async fn post_dvs(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Params,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let v = version(&q)?;
    let ctype = headers.get(header::CONTENT_TYPE).and_then(|h| h.to_str().ok()).unwrap_or("application/json");
    let report = if ctype.starts_with("application/octet-stream") {
        blocking(svc, move |s| s.insert_binary(&id, v, &body)).await?
    } else if ctype.starts_with("application/json") {
        let value: Value = parse(&body)?;
        blocking(svc, move |s| s.insert_json(&id, v, &value)).await?
    } else {
        return Err(ApiError::new(ErrorKind::BadRequest, format!("unsupported content type {ctype:?}")));
    };
    Ok((StatusCode::CREATED, Json(report)).into_response())
}

async fn search(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b = parse(&body)?;
    blocking(svc, move |s| s.search(&id, b)).await.map(ok)
}

async fn stats(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b = parse(&body)?;
    blocking(svc, move |s| s.stats(&id, b)).await.map(ok)
}

async fn suggest_dimensions(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b = if body.is_empty() { serde_json::from_str("{}")? } else { parse(&body)? };
    blocking(svc, move |s| s.suggest_dimensions(&id, b)).await.map(ok)
}

async fn suggest_intervals(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b = parse(&body)?;
    blocking(svc, move |s| s.suggest_intervals(&id, b)).await.map(ok)
}

async fn evaluate_variants(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b = parse(&body)?;
    blocking(svc, move |s| s.evaluate_variants(&id, b)).await.map(ok)
}

async fn usages(State(svc): State<Shared>, Path(gid): Path<String>) -> Result<Response, ApiError> {
    blocking(svc, move |s| s.usages(&gid)).await.map(ok)
}

async fn federated_search(State(svc): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let b = parse(&body)?;
    blocking(svc, move |s| s.federated_search(b)).await.map(ok)
}

async fn federated_answer(State(svc): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let value: Value = parse(&body)?;
    blocking(svc, move |s| Ok(s.answer(&value))).await.map(ok)
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route("/spaces", get(list_spaces))
        .route("/spaces/{id}", get(get_space).put(put_space))
        .route("/spaces/{id}/dvs", post(post_dvs))
        .route("/spaces/{id}/search", post(search))
        .route("/spaces/{id}/stats", post(stats))
        .route("/spaces/{id}/suggest-dimensions", post(suggest_dimensions))
        .route("/spaces/{id}/suggest-intervals", post(suggest_intervals))
        .route("/spaces/{id}/evaluate-variants", post(evaluate_variants))
        .route("/dimensions/{gid}/usages", get(usages))
        .route("/federated/search", post(federated_search))
        .route("/federated/answer", post(federated_answer))
        .with_state(svc)
}

/// Serves until the listener fails or ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, svc: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
