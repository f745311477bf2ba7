use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use sovgate::gateway::api::Api;
use sovgate::{Gateway, GatewayConfig};
use tower::ServiceExt;

fn app() -> axum::Router {
    let root = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut cfg = GatewayConfig::load(&root.join("config/gateway.toml")).unwrap();
    cfg.audit_log = None;
    let gw = Gateway::from_config(&cfg).unwrap();
    sovgate_cli::http::router(Arc::new(Api::new(Arc::new(gw))))
}

async fn call(app: &axum::Router, method: &str, uri: &str, principal: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(p) = principal {
        req = req.header("X-Principal", p);
    }
    let body = body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty);
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn review_round_trip_over_http() {
    let app = app();
    let task = json!({"source_id": "sat-1", "domain_tag": "summarization", "body": "pass 41", "requested_by": "ops"});
    let (status, sub) = call(&app, "POST", "/tasks", None, Some(task)).await;
    assert_eq!(status, StatusCode::OK, "{sub}");
    let task_id = sub["task_id"].as_str().unwrap();

    let (_, pending) = call(&app, "GET", "/pending", Some("reviewer-1"), None).await;
    let items = pending["items"].as_array().unwrap();
    assert_eq!(items.len(), 1);
    let item = items[0]["item_id"].as_str().unwrap();

    let decision = json!({"decision": "approve", "rationale": "matches the sensor pass"});
    let uri = format!("/items/{item}/decision");
    let (status, _) = call(&app, "POST", &uri, Some("reviewer-1"), Some(decision.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (status, err) = call(&app, "POST", &uri, Some("reviewer-2"), Some(decision)).await;
    assert_eq!((status, err["error"]["code"].as_str()), (StatusCode::CONFLICT, Some("ALREADY_DECIDED")));

    let (_, pending) = call(&app, "GET", "/pending", Some("reviewer-1"), None).await;
    assert!(pending["items"].as_array().unwrap().is_empty());
    let (_, trace) = call(&app, "GET", &format!("/tasks/{task_id}/trace"), None, None).await;
    assert_eq!(trace["human_interventions"]["status"], "populated");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn transport_errors() {
    let app = app();
    let (status, err) = call(&app, "DELETE", "/tasks/task-000001", None, None).await;
    assert_eq!((status, err["error"]["code"].as_str()), (StatusCode::METHOD_NOT_ALLOWED, Some("METHOD_NOT_ALLOWED")));
    let req = Request::builder().method("POST").uri("/tasks").body(Body::from("{not json")).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "GET", "/pending", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}
