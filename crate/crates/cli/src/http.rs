//! Maps HTTP onto the transport-neutral [`Api`]. Every path is handled by a
//! single fallback so the route table lives in one place.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use serde_json::{json, Value};
use sovgate::gateway::api::{parse_query, Api, ApiRequest, Method, PRINCIPAL_HEADER};

pub fn router(api: Arc<Api>) -> Router {
    Router::new().fallback(handle).with_state(api)
}

async fn handle(State(api): State<Arc<Api>>, method: HttpMethod, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let method = match method {
        HttpMethod::GET => Method::Get,
        HttpMethod::POST => Method::Post,
        _ => return error(StatusCode::METHOD_NOT_ALLOWED, "METHOD_NOT_ALLOWED", "only GET and POST are served"),
    };
    let body = if body.is_empty() {
        Value::Null
    } else {
        match serde_json::from_slice(&body) {
            Ok(v) => v,
            Err(e) => return error(StatusCode::BAD_REQUEST, "BAD_REQUEST", &format!("body is not JSON: {e}")),
        }
    };
    let principal = headers.get(PRINCIPAL_HEADER).and_then(|v| v.to_str().ok()).map(str::to_owned);
    let req = ApiRequest {
        method,
        path: uri.path().to_owned(),
        query: uri.query().map(parse_query).unwrap_or_default(),
        principal,
        body,
    };
    let resp = tokio::task::block_in_place(|| api.handle(&req));
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(resp.body)).into_response()
}

fn error(status: StatusCode, code: &str, message: &str) -> Response {
    (status, Json(json!({"error": {"code": code, "message": message}}))).into_response()
}

/// Serves until the process is stopped. Stale review items are expired on a
/// fixed tick when the gateway has a review timeout.
pub async fn serve(api: Arc<Api>, listen: &str, expiry_tick: Option<Duration>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    eprintln!("sovgate listening on {}", listener.local_addr()?);
    if let Some(tick) = expiry_tick {
        let gw = api.gateway().clone();
        tokio::spawn(async move {
            let mut every = tokio::time::interval(tick);
            loop {
                every.tick().await;
                let expired = gw.expire_reviews();
                if !expired.is_empty() {
                    eprintln!("expired {} review item(s)", expired.len());
                }
            }
        });
    }
    axum::serve(listener, router(api)).await
}
