//! The composed pipeline: ingest, route, constrain, review, authorize, with
//! every step logged. Also the admin operations and the transport-neutral
//! service API in [`api`].

pub mod api;
pub mod config;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;
use thiserror::Error;

use crate::adapters::{AdapterRegistry, AnalyticalOutput, ScoredOption, ScriptedSupplier};
use crate::audit::events::{
    AdminRollbackPayload, AdminSnapshotPayload, ConstraintPayload, ConstraintStage, IngestPayload,
    NormalizePayload, OutputOrigin, PolicyReloadPayload, RollbackTarget, TerminalState,
};
use crate::audit::{AuditLog, ConfigSnapshot, EventKind, LogError, SnapshotError, SnapshotRef, SnapshotStore};
use crate::authority::{
    ActionRecord, AuthorityError, AuthorizationDecision, DecisionKind, ItemId, PendingItem, Principal,
    PrincipalRegistry, ReviewQueue,
};
use crate::clock::{Clock, LogicalClock, MonotonicClock};
use crate::constraints::{evaluate, load_ruleset, serialize_ruleset, ConstraintVerdict, MalformedPolicy, Outcome, RuleSet};
use crate::digest::Digest;
use crate::ingest::{Ingestor, RawRequest, SourceRegistry, TaskEnvelope};
use crate::orchestrator::{route, FinalState, OrchestratorError, PinStore, RouteContext, RoutingDecision, RoutingPolicy};
use crate::types::{AdapterId, DomainTaxonomy, PrincipalId, TaskId};

pub use config::{AdapterFile, AdapterSpec, GatewayConfig};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GatewayError {
    #[error(transparent)]
    Authority(#[from] AuthorityError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    MalformedPolicy(#[from] MalformedPolicy),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("unknown task `{0}`")]
    UnknownTask(TaskId),
    #[error("unknown principal `{0}`")]
    UnknownPrincipal(PrincipalId),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl From<LogError> for GatewayError {
    fn from(e: LogError) -> Self {
        GatewayError::Io(format!("audit log: {e}"))
    }
}

/// Configuration that routing and constraint checks read. Swapped whole, so
/// a task in flight never sees a half-applied change.
#[derive(Clone, Debug)]
pub struct LiveConfig {
    pub registry: AdapterRegistry,
    pub policy: RoutingPolicy,
    pub ruleset: RuleSet,
    pub pins: PinStore,
}

impl LiveConfig {
    pub fn snapshot(&self, label: &str) -> ConfigSnapshot {
        ConfigSnapshot {
            label: label.to_owned(),
            policy: self.policy.clone(),
            ruleset: self.ruleset.clone(),
            pins: self.pins.pinned_map(),
            adapters: self.registry.descriptors().cloned().collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TaskStatus {
    pub task_id: TaskId,
    pub state: TerminalState,
    pub envelope: Option<TaskEnvelope>,
    pub routing: Option<RoutingDecision>,
    pub output: Option<AnalyticalOutput>,
    pub verdict: Option<ConstraintVerdict>,
    pub items: Vec<ItemId>,
    pub action_id: Option<String>,
}

/// What a human decision led to.
#[derive(Clone, Debug)]
pub struct DecisionOutcome {
    pub decision: AuthorizationDecision,
    pub state: TerminalState,
    pub action: Option<ActionRecord>,
    /// Re-check of a human-modified output, when there was one.
    pub recheck: Option<ConstraintVerdict>,
}

pub struct Gateway {
    ingestor: Ingestor,
    sources: SourceRegistry,
    principals: PrincipalRegistry,
    live: RwLock<Arc<LiveConfig>>,
    admin_lock: Mutex<()>,
    queue: ReviewQueue,
    log: AuditLog,
    clock: Arc<dyn Clock>,
    snapshots: Mutex<SnapshotStore>,
    tasks: Mutex<BTreeMap<TaskId, TaskStatus>>,
    review_timeout: Option<u64>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("events", &self.log.len()).finish_non_exhaustive()
    }
}

pub struct GatewayBuilder {
    taxonomy: DomainTaxonomy,
    sources: SourceRegistry,
    principals: PrincipalRegistry,
    registry: AdapterRegistry,
    policy: RoutingPolicy,
    ruleset: RuleSet,
    pins: Vec<(AdapterId, String)>,
    max_level: u8,
    clock: Arc<dyn Clock>,
    log: AuditLog,
    review_timeout: Option<u64>,
    staleness_limit: Option<u64>,
}

/// The principal recorded for pins that come from configuration files.
fn config_principal() -> Principal {
    Principal { id: PrincipalId::new("config"), display_name: "configuration".into(), clearance: 0, admin: true }
}

impl GatewayBuilder {
    pub fn sources(mut self, s: SourceRegistry) -> Self {
        self.sources = s;
        self
    }
    pub fn principals(mut self, p: PrincipalRegistry) -> Self {
        self.principals = p;
        self
    }
    pub fn registry(mut self, r: AdapterRegistry) -> Self {
        self.registry = r;
        self
    }
    pub fn policy(mut self, p: RoutingPolicy) -> Self {
        self.policy = p;
        self
    }
    pub fn ruleset(mut self, r: RuleSet) -> Self {
        self.ruleset = r;
        self
    }
    pub fn pin(mut self, adapter: &str, version: &str) -> Self {
        self.pins.push((adapter.into(), version.to_owned()));
        self
    }
    pub fn max_level(mut self, l: u8) -> Self {
        self.max_level = l;
        self
    }
    pub fn clock(mut self, c: Arc<dyn Clock>) -> Self {
        self.clock = c;
        self
    }
    pub fn log(mut self, l: AuditLog) -> Self {
        self.log = l;
        self
    }
    pub fn review_timeout(mut self, t: Option<u64>) -> Self {
        self.review_timeout = t;
        self
    }
    pub fn staleness_limit(mut self, t: Option<u64>) -> Self {
        self.staleness_limit = t;
        self
    }

    /// Validates the assembled configuration. Any failure aborts the boot.
    pub fn build(self) -> Result<Gateway, GatewayError> {
        self.policy.validate(&self.taxonomy, &self.registry)?;
        for d in self.registry.descriptors() {
            d.validate(&self.taxonomy).map_err(|e| GatewayError::Config(e.to_string()))?;
        }
        let mut pins = PinStore::new();
        let booter = config_principal();
        for (id, v) in &self.pins {
            pins.pin_version(id, v, &booter, &self.registry, &self.log, self.clock.now())?;
        }
        let mut ingestor = Ingestor::new(self.taxonomy);
        if let Some(l) = self.staleness_limit {
            ingestor = ingestor.with_staleness_limit(l);
        }
        Ok(Gateway {
            ingestor,
            sources: self.sources,
            principals: self.principals,
            live: RwLock::new(Arc::new(LiveConfig {
                registry: self.registry,
                policy: self.policy,
                ruleset: self.ruleset,
                pins,
            })),
            admin_lock: Mutex::new(()),
            queue: ReviewQueue::new(self.max_level),
            log: self.log,
            clock: self.clock,
            snapshots: Mutex::new(SnapshotStore::new()),
            tasks: Mutex::new(BTreeMap::new()),
            review_timeout: self.review_timeout,
        })
    }
}

fn read(path: &Path) -> Result<String, GatewayError> {
    std::fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))
}

impl Gateway {
    pub fn builder(taxonomy: DomainTaxonomy) -> GatewayBuilder {
        GatewayBuilder {
            taxonomy,
            sources: SourceRegistry::new(),
            principals: PrincipalRegistry::default(),
            registry: AdapterRegistry::new(),
            policy: RoutingPolicy::default(),
            ruleset: RuleSet::new(),
            pins: Vec::new(),
            max_level: crate::authority::DEFAULT_MAX_LEVEL,
            clock: Arc::new(LogicalClock::new()),
            log: AuditLog::new(),
            review_timeout: None,
            staleness_limit: None,
        }
    }

    /// Boots from configuration files with simulated suppliers. Every
    /// referenced file must load.
    pub fn from_config(cfg: &GatewayConfig) -> Result<Gateway, GatewayError> {
        let taxonomy = cfg.taxonomy();
        let cfg_err = |what: &str, e: &dyn std::fmt::Display| GatewayError::Config(format!("{what}: {e}"));
        let sources = SourceRegistry::parse(&read(&cfg.sources)?).map_err(|e| cfg_err("sources", &e))?;
        let principals = PrincipalRegistry::parse(&read(&cfg.principals)?).map_err(|e| cfg_err("principals", &e))?;
        let policy = RoutingPolicy::parse(&read(&cfg.routing_policy)?)?;
        let ruleset = load_ruleset(&read(&cfg.ruleset)?, &taxonomy)?;
        let adapters = AdapterFile::parse(&read(&cfg.adapters)?)?;
        let log = match &cfg.audit_log {
            Some(p) => AuditLog::open(p)?,
            None => AuditLog::new(),
        };
        let mut registry = AdapterRegistry::new();
        let mut builder = Gateway::builder(taxonomy.clone());
        for spec in &adapters.adapter {
            let d = spec.descriptor();
            let supplier = Arc::new(ScriptedSupplier::new(&d, spec.model_seed, spec.script.clone()));
            registry.register(d, supplier, &taxonomy).map_err(|e| cfg_err("adapters", &e))?;
            if let Some(v) = &spec.pin {
                builder = builder.pin(&spec.adapter_id, v);
            }
        }
        builder
            .sources(sources)
            .principals(principals)
            .registry(registry)
            .policy(policy)
            .ruleset(ruleset)
            .max_level(cfg.max_escalation_level)
            .clock(Arc::new(MonotonicClock::default()))
            .log(log)
            .review_timeout(cfg.review_timeout)
            .staleness_limit(cfg.staleness_limit)
            .build()
    }

    pub fn log(&self) -> &AuditLog {
        &self.log
    }

    pub fn queue(&self) -> &ReviewQueue {
        &self.queue
    }

    pub fn principals(&self) -> &PrincipalRegistry {
        &self.principals
    }

    pub fn now(&self) -> crate::clock::Timestamp {
        self.clock.now()
    }

    /// The configuration new tasks will read.
    pub fn live_config(&self) -> Arc<LiveConfig> {
        self.live.read().expect("live config lock").clone()
    }

    fn record(&self, status: TaskStatus) -> TaskStatus {
        self.tasks.lock().expect("task table lock").insert(status.task_id.clone(), status.clone());
        status
    }

    fn update<F: FnOnce(&mut TaskStatus)>(&self, task: &TaskId, f: F) -> Option<TaskStatus> {
        let mut tasks = self.tasks.lock().expect("task table lock");
        let t = tasks.get_mut(task)?;
        f(t);
        Some(t.clone())
    }

    /// Runs a request as far as it can go without a human: to a terminal
    /// state, or to `pending` on the review queue.
    pub fn process_task(&self, raw: &RawRequest) -> TaskStatus {
        let envelope = match self.ingestor.ingest_task(raw, &self.sources, self.clock.now()) {
            Ok(env) => env,
            Err(err) => {
                self.log.append(EventKind::Ingest, Some(err.task_id()), &IngestPayload::rejected(&err, raw));
                return self.record(TaskStatus {
                    task_id: err.task_id().clone(),
                    state: TerminalState::Rejected,
                    envelope: None,
                    routing: None,
                    output: None,
                    verdict: None,
                    items: Vec::new(),
                    action_id: None,
                });
            }
        };
        let task_id = envelope.task_id.clone();
        self.log.append(EventKind::Ingest, Some(&task_id), &IngestPayload::accepted(&envelope));
        let mut status = TaskStatus {
            task_id: task_id.clone(),
            state: TerminalState::Degraded,
            envelope: Some(envelope.clone()),
            routing: None,
            output: None,
            verdict: None,
            items: Vec::new(),
            action_id: None,
        };

        let live = self.live_config();
        let ctx = RouteContext {
            registry: &live.registry,
            policy: &live.policy,
            pins: &live.pins,
            log: &self.log,
            clock: self.clock.as_ref(),
        };
        let (decision, output) = match route(&envelope, &ctx) {
            Ok(r) => r,
            Err(_) => return self.record(status),
        };
        let final_state = decision.final_state;
        status.routing = Some(decision);
        let Some(output) = output else {
            if final_state == FinalState::DegradedQueued {
                let item = self.queue.enqueue_degraded(&task_id, &self.log, self.clock.now());
                status.items.push(item.item_id);
                status.state = TerminalState::Pending;
            }
            return self.record(status);
        };

        let verdict = evaluate(&output, &envelope, &live.ruleset);
        self.log.append(
            EventKind::ConstraintVerdict,
            Some(&task_id),
            &ConstraintPayload::new(ConstraintStage::Primary, &verdict),
        );
        status.output = Some(output.clone());
        status.verdict = Some(verdict.clone());
        if verdict.outcome == Outcome::Denied {
            status.state = TerminalState::Denied;
            return self.record(status);
        }
        let item = self.queue.enqueue_for_review(&output, &verdict, &self.log, self.clock.now()).expect("not denied");
        status.items.push(item.item_id);
        status.state = TerminalState::Pending;
        self.record(status)
    }

    /// Records a human decision and, when it approves, authorizes the action.
    /// A modified output is re-checked against the ruleset first.
    pub fn decide(
        &self,
        item_id: &ItemId,
        principal: &PrincipalId,
        decision: DecisionKind,
        rationale: &str,
        modified_options: Option<Vec<ScoredOption>>,
    ) -> Result<DecisionOutcome, GatewayError> {
        let item = self.queue.get(item_id).ok_or_else(|| AuthorityError::UnknownItem(item_id.clone()))?;
        let d = self.queue.decide(item_id, principal, decision, rationale, &self.principals, &self.log, self.clock.now())?;
        let task_id = d.task_id().clone();

        let mut recheck = None;
        let mut effect_output = item.output.clone();
        if decision == DecisionKind::OverrideModify {
            if let (Some(mut out), Some(options)) = (item.output.clone(), modified_options) {
                out.options = options;
                out.rationale_digest = Some(Digest::of(rationale.as_bytes()));
                self.log.append(
                    EventKind::Normalize,
                    Some(&task_id),
                    &NormalizePayload::from_output(&out, OutputOrigin::HumanOverride),
                );
                let envelope = self.status(&task_id)?.envelope.ok_or_else(|| GatewayError::UnknownTask(task_id.clone()))?;
                let v = evaluate(&out, &envelope, &self.live_config().ruleset);
                self.log.append(
                    EventKind::ConstraintVerdict,
                    Some(&task_id),
                    &ConstraintPayload::new(ConstraintStage::OverrideRecheck, &v),
                );
                let denied = v.outcome == Outcome::Denied;
                recheck = Some(v);
                effect_output = Some(out);
                if denied {
                    let status = self.update(&task_id, |s| s.state = TerminalState::Denied);
                    return Ok(DecisionOutcome {
                        decision: d,
                        state: status.map(|s| s.state).unwrap_or(TerminalState::Denied),
                        action: None,
                        recheck,
                    });
                }
            }
        }

        if !decision.authorizes() {
            self.update(&task_id, |s| s.state = TerminalState::Rejected);
            return Ok(DecisionOutcome { decision: d, state: TerminalState::Rejected, action: None, recheck });
        }
        let effect = match &effect_output {
            Some(o) => {
                let top = o.options.iter().max_by(|a, b| a.score.total_cmp(&b.score)).map(|o| o.option_id.as_str());
                format!("adopt:{}:{}", o.kind.as_str(), top.unwrap_or("none"))
            }
            None => "manual_handling".to_owned(),
        };
        let action = self.queue.authorize_action(&d, &effect, &self.log)?;
        let action_id = action.action_id().to_owned();
        self.update(&task_id, |s| {
            s.state = TerminalState::ActionIssued;
            s.action_id = Some(action_id);
            if let Some(o) = effect_output {
                s.output = Some(o);
            }
        });
        Ok(DecisionOutcome { decision: d, state: TerminalState::ActionIssued, action: Some(action), recheck })
    }

    pub fn escalate(&self, item_id: &ItemId, reason: &str) -> Result<PendingItem, GatewayError> {
        let next = self.queue.escalate(item_id, reason, &self.log, self.clock.now())?;
        self.update(&next.task_id, |s| s.items.push(next.item_id.clone()));
        Ok(next)
    }

    /// Moves stale pending items up a level, if a review timeout is configured.
    pub fn expire_reviews(&self) -> Vec<PendingItem> {
        let Some(timeout) = self.review_timeout else { return Vec::new() };
        let spawned = self.queue.expire_stale(self.clock.now(), timeout, &self.log);
        for item in &spawned {
            self.update(&item.task_id, |s| s.items.push(item.item_id.clone()));
        }
        spawned
    }

    pub fn status(&self, task: &TaskId) -> Result<TaskStatus, GatewayError> {
        self.tasks.lock().expect("task table lock").get(task).cloned().ok_or_else(|| GatewayError::UnknownTask(task.clone()))
    }

    pub fn task_ids(&self) -> Vec<TaskId> {
        self.tasks.lock().expect("task table lock").keys().cloned().collect()
    }

    pub fn list_pending(&self, principal: &PrincipalId, level: Option<u8>) -> Result<Vec<PendingItem>, GatewayError> {
        let p = self.principals.get(principal).ok_or_else(|| GatewayError::UnknownPrincipal(principal.clone()))?;
        Ok(self.queue.list_pending(p.clearance, level))
    }

    fn admin(&self, principal: &PrincipalId) -> Result<Principal, GatewayError> {
        match self.principals.get(principal) {
            Some(p) if p.admin => Ok(p.clone()),
            Some(_) => Err(OrchestratorError::UnauthorizedPrincipal(principal.clone()).into()),
            None => Err(GatewayError::UnknownPrincipal(principal.clone())),
        }
    }

    /// Applies `f` to a copy of the live configuration and swaps it in only
    /// if `f` succeeds.
    fn modify<T>(&self, f: impl FnOnce(&mut LiveConfig) -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let _guard = self.admin_lock.lock().expect("admin lock");
        let mut next = (*self.live_config()).clone();
        let out = f(&mut next)?;
        *self.live.write().expect("live config lock") = Arc::new(next);
        Ok(out)
    }

    pub fn admin_pin(&self, principal: &PrincipalId, adapter: &AdapterId, version: &str) -> Result<(), GatewayError> {
        let p = self.admin(principal)?;
        self.modify(|c| Ok(c.pins.pin_version(adapter, version, &p, &c.registry, &self.log, self.clock.now())?))
    }

    pub fn admin_rollback_version(&self, principal: &PrincipalId, adapter: &AdapterId) -> Result<String, GatewayError> {
        let p = self.admin(principal)?;
        self.modify(|c| Ok(c.pins.rollback_version(adapter, &p, &self.log, self.clock.now())?))
    }

    /// Replaces the ruleset and/or routing policy. Either both parse and
    /// validate, or nothing changes.
    pub fn admin_reload_policy(
        &self,
        principal: &PrincipalId,
        ruleset: Option<&str>,
        routing_policy: Option<&str>,
    ) -> Result<usize, GatewayError> {
        let p = self.admin(principal)?;
        let result = self.modify(|c| {
            if let Some(text) = ruleset {
                c.ruleset = load_ruleset(text, self.ingestor.taxonomy())?;
            }
            if let Some(text) = routing_policy {
                let policy = RoutingPolicy::parse(text)?;
                policy.validate(self.ingestor.taxonomy(), &c.registry)?;
                c.policy = policy;
            }
            Ok((c.ruleset.len(), Digest::of(serialize_ruleset(&c.ruleset).as_bytes())))
        });
        let payload = match &result {
            Ok((n, d)) => {
                PolicyReloadPayload { principal: p.id.clone(), accepted: true, rule_count: *n, ruleset_digest: Some(*d), error: None }
            }
            Err(e) => PolicyReloadPayload {
                principal: p.id.clone(),
                accepted: false,
                rule_count: self.live_config().ruleset.len(),
                ruleset_digest: None,
                error: Some(e.to_string()),
            },
        };
        self.log.append(EventKind::PolicyReload, None, &payload);
        result.map(|(n, _)| n)
    }

    pub fn admin_snapshot(&self, principal: &PrincipalId, label: &str) -> Result<SnapshotRef, GatewayError> {
        let p = self.admin(principal)?;
        let _guard = self.admin_lock.lock().expect("admin lock");
        let snap = self.live_config().snapshot(label);
        let config_digest = snap.digest();
        let r = self.snapshots.lock().expect("snapshot lock").insert(snap);
        self.log.append(
            EventKind::AdminSnapshot,
            None,
            &AdminSnapshotPayload { principal: p.id, snapshot: r.to_string(), label: label.to_owned(), config_digest },
        );
        Ok(r)
    }

    /// Restores the configuration captured in a snapshot. Pin history is
    /// extended with restoration entries; the log is untouched.
    pub fn admin_rollback_config(&self, principal: &PrincipalId, r: &SnapshotRef) -> Result<(), GatewayError> {
        let p = self.admin(principal)?;
        let snap = self.snapshots.lock().expect("snapshot lock").get(r)?.clone();
        self.modify(|c| {
            c.policy = snap.policy.clone();
            c.ruleset = snap.ruleset.clone();
            c.registry = c.registry.restrict_to(&snap.adapters);
            c.pins.restore_from(&snap.pins, &p.id, self.clock.now());
            self.log.append(
                EventKind::AdminRollback,
                None,
                &AdminRollbackPayload {
                    target: RollbackTarget::Config,
                    principal: p.id.clone(),
                    adapter_id: None,
                    version: None,
                    snapshot: Some(r.to_string()),
                    history_len: None,
                },
            );
            Ok(())
        })
    }
}
