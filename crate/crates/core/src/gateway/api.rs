//! Transport-neutral request handling. The HTTP server in the CLI crate only
//! translates to and from [`ApiRequest`] and [`ApiResponse`].
//!
//! | method | path | operation |
//! |---|---|---|
//! | POST | `/tasks` | submit_task |
//! | GET | `/tasks/{id}` | get_task_state |
//! | GET | `/tasks/{id}/trace` | get_trace |
//! | GET | `/pending?level=N` | list_pending |
//! | POST | `/items/{id}/decision` | post_decision |
//! | POST | `/items/{id}/escalation` | post_escalation |
//! | GET | `/scorecard?run=NAME` | get_scorecard |
//! | POST | `/admin/pin` | admin_pin |
//! | POST | `/admin/rollback-version` | admin_rollback_version |
//! | POST | `/admin/reload-policy` | admin_reload_policy |
//! | POST | `/admin/snapshot` | admin_snapshot |
//! | POST | `/admin/rollback-config` | admin_rollback_config |
//!
//! The acting principal travels in the `X-Principal` header. Errors come
//! back as `{"error": {"code": ..., "message": ...}}`.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Gateway, GatewayError};
use crate::adapters::ScoredOption;
use crate::audit::{reconstruct_trace, SnapshotError, TraceError};
use crate::authority::{AuthorityError, DecisionKind, ItemId};
use crate::ingest::RawRequest;
use crate::orchestrator::OrchestratorError;
use crate::threat_sim::{score_sovereignty, SovereigntyScorecard};
use crate::types::{AdapterId, PrincipalId, TaskId};

pub const PRINCIPAL_HEADER: &str = "X-Principal";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub principal: Option<String>,
    pub body: Value,
}

impl ApiRequest {
    pub fn get(path: &str) -> Self {
        let (path, query) = match path.split_once('?') {
            Some((p, q)) => (p, parse_query(q)),
            None => (path, BTreeMap::new()),
        };
        ApiRequest { method: Method::Get, path: path.to_owned(), query, principal: None, body: Value::Null }
    }

    pub fn post(path: &str, body: Value) -> Self {
        ApiRequest { method: Method::Post, body, ..Self::get(path) }
    }

    pub fn as_principal(mut self, p: &str) -> Self {
        self.principal = Some(p.to_owned());
        self
    }
}

pub fn parse_query(q: &str) -> BTreeMap<String, String> {
    q.split('&')
        .filter(|kv| !kv.is_empty())
        .map(|kv| match kv.split_once('=') {
            Some((k, v)) => (k.to_owned(), v.to_owned()),
            None => (kv.to_owned(), String::new()),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    fn ok(body: Value) -> Self {
        ApiResponse { status: 200, body }
    }

    pub fn error_code(&self) -> Option<&str> {
        self.body.get("error")?.get("code")?.as_str()
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(400, "BAD_REQUEST", message)
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            GatewayError::Authority(a) => match a {
                AuthorityError::AlreadyDecided(_) => (409, "ALREADY_DECIDED"),
                AuthorityError::UnauthorizedPrincipal(_) => (403, "UNAUTHORIZED_PRINCIPAL"),
                AuthorityError::EmptyRationale => (400, "EMPTY_RATIONALE"),
                AuthorityError::MaxLevelReached(_) => (409, "MAX_LEVEL_REACHED"),
                AuthorityError::UnknownItem(_) => (404, "UNKNOWN_ITEM"),
                AuthorityError::DeniedVerdict => (409, "DENIED_VERDICT"),
                AuthorityError::RejectedDecision => (409, "REJECTED_DECISION"),
                AuthorityError::AlreadyAuthorized(_) => (409, "ALREADY_AUTHORIZED"),
            },
            GatewayError::Orchestrator(o) => match o {
                OrchestratorError::UnknownAdapter(_) => (404, "UNKNOWN_ADAPTER"),
                OrchestratorError::UnauthorizedPrincipal(_) => (403, "UNAUTHORIZED_PRINCIPAL"),
                OrchestratorError::NothingToRollback(_) => (409, "NOTHING_TO_ROLLBACK"),
                OrchestratorError::UnconfiguredDomain(_) => (422, "UNCONFIGURED_DOMAIN"),
                OrchestratorError::InvalidPolicy(_) => (422, "INVALID_POLICY"),
            },
            GatewayError::MalformedPolicy(_) => (422, "MALFORMED_POLICY"),
            GatewayError::Snapshot(SnapshotError::UnknownSnapshot(_)) => (404, "UNKNOWN_SNAPSHOT"),
            GatewayError::UnknownTask(_) => (404, "UNKNOWN_TASK"),
            GatewayError::UnknownPrincipal(_) => (403, "UNKNOWN_PRINCIPAL"),
            GatewayError::Config(_) => (500, "CONFIG"),
            GatewayError::Io(_) => (500, "IO"),
        };
        ApiError::new(status, code, message)
    }
}

impl From<ApiError> for ApiResponse {
    fn from(e: ApiError) -> Self {
        ApiResponse { status: e.status, body: json!({"error": {"code": e.code, "message": e.message}}) }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: DecisionKind,
    rationale: String,
    #[serde(default)]
    modified_options: Option<Vec<ScoredOption>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EscalationBody {
    reason: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PinBody {
    adapter_id: String,
    version: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RollbackVersionBody {
    adapter_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReloadBody {
    #[serde(default)]
    ruleset: Option<String>,
    #[serde(default)]
    routing_policy: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotBody {
    label: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RollbackConfigBody {
    snapshot: String,
}

fn body<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T, ApiError> {
    serde_json::from_value(v.clone()).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("api values serialize")
}

/// The service API over one gateway.
pub struct Api {
    gateway: Arc<Gateway>,
    runs: Mutex<BTreeMap<String, SovereigntyScorecard>>,
}

impl Api {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        Api { gateway, runs: Mutex::new(BTreeMap::new()) }
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    /// Makes a scenario run's scorecard available under `GET /scorecard?run=NAME`.
    pub fn attach_run(&self, name: &str, scorecard: SovereigntyScorecard) {
        self.runs.lock().expect("runs lock").insert(name.to_owned(), scorecard);
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        match self.dispatch(req) {
            Ok(v) => ApiResponse::ok(v),
            Err(e) => e.into(),
        }
    }

    fn principal(req: &ApiRequest) -> Result<PrincipalId, ApiError> {
        match req.principal.as_deref().map(str::trim) {
            Some(p) if !p.is_empty() => Ok(PrincipalId::new(p)),
            _ => Err(ApiError::new(401, "MISSING_PRINCIPAL", format!("{PRINCIPAL_HEADER} header required"))),
        }
    }

    fn dispatch(&self, req: &ApiRequest) -> Result<Value, ApiError> {
        let segments: Vec<&str> = req.path.trim_matches('/').split('/').collect();
        let g = self.gateway.as_ref();
        match (req.method, segments.as_slice()) {
            (Method::Post, ["tasks"]) => {
                let raw: RawRequest = body(&req.body)?;
                Ok(to_json(&g.process_task(&raw)))
            }
            (Method::Get, ["tasks", id]) => Ok(to_json(&g.status(&TaskId::new(*id))?)),
            (Method::Get, ["tasks", id, "trace"]) => {
                let events = g.log().snapshot();
                match reconstruct_trace(&TaskId::new(*id), &events) {
                    Ok(t) => Ok(to_json(&t)),
                    Err(TraceError::UnknownTask(t)) => Err(GatewayError::UnknownTask(t).into()),
                }
            }
            (Method::Get, ["pending"]) => {
                let principal = Self::principal(req)?;
                let level = match req.query.get("level") {
                    Some(l) => Some(l.parse().map_err(|_| ApiError::bad_request(format!("bad level `{l}`")))?),
                    None => None,
                };
                Ok(json!({"items": to_json(&g.list_pending(&principal, level)?)}))
            }
            (Method::Post, ["items", id, "decision"]) => {
                let principal = Self::principal(req)?;
                let b: DecisionBody = body(&req.body)?;
                let out = g.decide(&ItemId::new(*id), &principal, b.decision, &b.rationale, b.modified_options)?;
                Ok(json!({
                    "decision": to_json(&out.decision),
                    "state": to_json(&out.state),
                    "action": to_json(&out.action),
                    "recheck": to_json(&out.recheck),
                }))
            }
            (Method::Post, ["items", id, "escalation"]) => {
                Self::principal(req)?;
                let b: EscalationBody = body(&req.body)?;
                Ok(to_json(&g.escalate(&ItemId::new(*id), &b.reason)?))
            }
            (Method::Get, ["scorecard"]) => match req.query.get("run") {
                Some(run) => match self.runs.lock().expect("runs lock").get(run) {
                    Some(s) => Ok(to_json(s)),
                    None => Err(ApiError::new(404, "UNKNOWN_RUN", format!("no run named `{run}`"))),
                },
                None => {
                    let s = score_sovereignty(&g.log().snapshot()).map_err(|e| ApiError::new(500, "BROKEN_CHAIN", e.to_string()))?;
                    Ok(to_json(&s))
                }
            },
            (Method::Post, ["admin", op]) => {
                let principal = Self::principal(req)?;
                match *op {
                    "pin" => {
                        let b: PinBody = body(&req.body)?;
                        g.admin_pin(&principal, &AdapterId::new(b.adapter_id.as_str()), &b.version)?;
                        Ok(json!({"adapter_id": b.adapter_id, "pinned_version": b.version}))
                    }
                    "rollback-version" => {
                        let b: RollbackVersionBody = body(&req.body)?;
                        let v = g.admin_rollback_version(&principal, &AdapterId::new(b.adapter_id.as_str()))?;
                        Ok(json!({"adapter_id": b.adapter_id, "pinned_version": v}))
                    }
                    "reload-policy" => {
                        let b: ReloadBody = body(&req.body)?;
                        if b.ruleset.is_none() && b.routing_policy.is_none() {
                            return Err(ApiError::bad_request("nothing to reload"));
                        }
                        let n = g.admin_reload_policy(&principal, b.ruleset.as_deref(), b.routing_policy.as_deref())?;
                        Ok(json!({"rule_count": n}))
                    }
                    "snapshot" => {
                        let b: SnapshotBody = body(&req.body)?;
                        Ok(json!({"snapshot": g.admin_snapshot(&principal, &b.label)?.to_string()}))
                    }
                    "rollback-config" => {
                        let b: RollbackConfigBody = body(&req.body)?;
                        g.admin_rollback_config(&principal, &crate::audit::SnapshotRef::new(b.snapshot.as_str()))?;
                        Ok(json!({"restored": b.snapshot}))
                    }
                    _ => Err(ApiError::new(404, "NOT_FOUND", format!("no route for {}", req.path))),
                }
            }
            (Method::Get, ["tasks"]) | (Method::Get, ["items", ..]) | (Method::Get, ["admin", ..]) => {
                Err(ApiError::new(405, "METHOD_NOT_ALLOWED", format!("GET {} not supported", req.path)))
            }
            _ => Err(ApiError::new(404, "NOT_FOUND", format!("no route for {}", req.path))),
        }
    }
}
