use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::*;
use crate::adapters::{AdapterDescriptor, OutputKind, PayloadDialect, Supplier, SupplierDraft};
use crate::audit::{verify_chain, ChainVerdict};
use crate::clock::{LogicalClock, Timestamp};
use crate::testkit::{admin, envelope, principals};
use crate::types::{DomainTaxonomy, Tier};

/// A supplier whose every answer is fixed up front.
#[derive(Debug)]
struct Stub {
    id: AdapterId,
    status: ResponseStatus,
    version: String,
    confidence: f64,
    probe: Availability,
    calls: AtomicU64,
}

impl Stub {
    fn new(id: &str, status: ResponseStatus) -> Self {
        Stub {
            id: id.into(),
            status,
            version: "1.0".into(),
            confidence: 0.9,
            probe: Availability::Available,
            calls: AtomicU64::new(0),
        }
    }
}

impl Supplier for Stub {
    fn invoke(&self, _: &TaskEnvelope) -> RawSupplierResponse {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let draft = SupplierDraft {
            kind: OutputKind::Summary,
            options: vec![("o1".into(), "relay window".into(), 0.7)],
            confidence: self.confidence,
            rationale: Some("basis".into()),
        };
        let body = match self.status {
            ResponseStatus::Ok => PayloadDialect::Json.encode(&draft),
            ResponseStatus::Malformed => "{not json".into(),
            _ => String::new(),
        };
        RawSupplierResponse {
            adapter_id: self.id.clone(),
            reported_version: self.version.clone(),
            status: self.status,
            refusal_reason: (self.status == ResponseStatus::Refused).then(|| "policy".into()),
            body,
            rationale_fields_present: true,
        }
    }

    fn probe(&self) -> Availability {
        self.probe
    }
}

struct Fixture {
    registry: AdapterRegistry,
    policy: RoutingPolicy,
    pins: PinStore,
    log: AuditLog,
    clock: LogicalClock,
    stubs: Vec<Arc<Stub>>,
}

impl Fixture {
    fn new(stubs: Vec<Stub>, mode: DegradedMode) -> Self {
        let taxonomy = DomainTaxonomy::default();
        let mut registry = AdapterRegistry::new();
        let mut pins = PinStore::new();
        let log = AuditLog::new();
        let stubs: Vec<Arc<Stub>> = stubs.into_iter().map(Arc::new).collect();
        for s in &stubs {
            let d = AdapterDescriptor::new(s.id.as_str(), "supplier", "1.0", ["summarization"]);
            registry.register(d, s.clone(), &taxonomy).unwrap();
            pins.pin_version(&s.id, "1.0", &admin(), &registry, &log, Timestamp(0)).unwrap();
        }
        let route = DomainRoute {
            preference: stubs.iter().map(|s| s.id.clone()).collect(),
            confidence_threshold: 0.5,
            degraded_mode: mode,
            internal_fallback: Vec::new(),
        };
        let policy = RoutingPolicy::uniform(&taxonomy, route);
        Fixture { registry, policy, pins, log, clock: LogicalClock::default(), stubs }
    }

    fn route(&self) -> (RoutingDecision, Option<AnalyticalOutput>) {
        let ctx = RouteContext {
            registry: &self.registry,
            policy: &self.policy,
            pins: &self.pins,
            log: &self.log,
            clock: &self.clock,
        };
        route(&envelope("task-1", "summarization", Tier::Verified), &ctx).unwrap()
    }
}

fn outcomes(d: &RoutingDecision) -> Vec<AttemptOutcome> {
    d.attempts.iter().map(|a| a.outcome).collect()
}

#[test]
fn single_candidate_routes() {
    let f = Fixture::new(vec![Stub::new("alpha", ResponseStatus::Ok)], DegradedMode::FailClosed);
    let (d, out) = f.route();
    assert_eq!(d.final_state, FinalState::Routed);
    assert_eq!(d.chosen_adapter, Some("alpha".into()));
    assert_eq!(out.unwrap().adapter_id, AdapterId::new("alpha"));
}

#[test]
fn refusal_falls_back_in_order() {
    let f = Fixture::new(
        vec![Stub::new("alpha", ResponseStatus::Refused), Stub::new("beta", ResponseStatus::Ok)],
        DegradedMode::FailClosed,
    );
    let (d, _) = f.route();
    assert_eq!(d.chosen_adapter, Some("beta".into()));
    assert_eq!(outcomes(&d), vec![AttemptOutcome::Refused, AttemptOutcome::Ok]);
}

#[test]
fn fail_closed_exhaustive_two_adapter_states() {
    use ResponseStatus::*;
    let states = [Ok, Refused, Unavailable];
    for a in states {
        for b in states {
            let f = Fixture::new(vec![Stub::new("alpha", a), Stub::new("beta", b)], DegradedMode::FailClosed);
            let (d, out) = f.route();
            // Oracle: the first adapter in preference order that answers ok wins.
            let expected = [("alpha", a), ("beta", b)].into_iter().find(|(_, s)| *s == Ok).map(|(id, _)| id);
            assert_eq!(d.chosen_adapter.as_ref().map(|x| x.as_str()), expected, "{a:?}/{b:?}");
            match expected {
                Some(_) => assert_eq!(d.final_state, FinalState::Routed),
                None => {
                    assert_eq!(d.final_state, FinalState::DegradedFailClosed);
                    assert!(out.is_none());
                }
            }
            let walked = if a == Ok { 1 } else { 2 };
            assert_eq!(d.attempts.len(), walked);
        }
    }
}

#[test]
fn queue_for_human_when_exhausted() {
    let f = Fixture::new(vec![Stub::new("alpha", ResponseStatus::Unavailable)], DegradedMode::QueueForHuman);
    let (d, out) = f.route();
    assert_eq!(d.final_state, FinalState::DegradedQueued);
    assert!(d.chosen_adapter.is_none() && out.is_none());
}

#[test]
fn internal_only_walks_the_fallback_list() {
    let mut f = Fixture::new(
        vec![Stub::new("alpha", ResponseStatus::Refused), Stub::new("house", ResponseStatus::Ok)],
        DegradedMode::InternalOnly,
    );
    for route in f.policy.domain.values_mut() {
        route.preference = vec!["alpha".into()];
        route.internal_fallback = vec!["house".into()];
    }
    let (d, _) = f.route();
    assert_eq!(d.chosen_adapter, Some("house".into()));
    assert_eq!(outcomes(&d), vec![AttemptOutcome::Refused, AttemptOutcome::Ok]);

    f.stubs.clear();
    for route in f.policy.domain.values_mut() {
        route.internal_fallback.clear();
    }
    let (d, _) = f.route();
    assert_eq!(d.final_state, FinalState::DegradedFailClosed);
}

#[test]
fn confidence_gate_and_malformed() {
    let mut low = Stub::new("alpha", ResponseStatus::Ok);
    low.confidence = 0.2;
    let f = Fixture::new(
        vec![low, Stub::new("beta", ResponseStatus::Malformed), Stub::new("gamma", ResponseStatus::Ok)],
        DegradedMode::FailClosed,
    );
    let (d, out) = f.route();
    assert_eq!(outcomes(&d), vec![AttemptOutcome::LowConfidence, AttemptOutcome::Malformed, AttemptOutcome::Ok]);
    assert!(out.unwrap().confidence >= 0.5);
}

#[test]
fn withdrawn_adapters_are_not_invoked() {
    let mut gone = Stub::new("alpha", ResponseStatus::Ok);
    gone.probe = Availability::Withdrawn;
    let f = Fixture::new(vec![gone, Stub::new("beta", ResponseStatus::Ok)], DegradedMode::FailClosed);
    let (d, _) = f.route();
    assert_eq!(outcomes(&d), vec![AttemptOutcome::Unavailable, AttemptOutcome::Ok]);
    assert_eq!(f.stubs[0].calls.load(Ordering::SeqCst), 0);
}

#[test]
fn uncertified_domain_is_skipped() {
    let f = Fixture::new(vec![Stub::new("alpha", ResponseStatus::Ok)], DegradedMode::FailClosed);
    let ctx = RouteContext { registry: &f.registry, policy: &f.policy, pins: &f.pins, log: &f.log, clock: &f.clock };
    let (d, _) = route(&envelope("task-2", "planning_support", Tier::Verified), &ctx).unwrap();
    assert_eq!(outcomes(&d), vec![AttemptOutcome::Uncertified]);
    assert_eq!(d.final_state, FinalState::DegradedFailClosed);
}

#[test]
fn unconfigured_domain_fails_closed() {
    let mut f = Fixture::new(vec![Stub::new("alpha", ResponseStatus::Ok)], DegradedMode::FailClosed);
    f.policy.domain.clear();
    let ctx = RouteContext { registry: &f.registry, policy: &f.policy, pins: &f.pins, log: &f.log, clock: &f.clock };
    let err = route(&envelope("task-3", "summarization", Tier::Verified), &ctx).unwrap_err();
    assert_eq!(err, OrchestratorError::UnconfiguredDomain("summarization".into()));
    assert_eq!(f.stubs[0].calls.load(Ordering::SeqCst), 0);
}

#[test]
fn drifted_version_is_a_mismatch_and_not_normalized() {
    let mut drifted = Stub::new("alpha", ResponseStatus::Ok);
    drifted.version = "1.1".into();
    let f = Fixture::new(vec![drifted, Stub::new("beta", ResponseStatus::Ok)], DegradedMode::FailClosed);
    let (d, out) = f.route();
    assert_eq!(outcomes(&d), vec![AttemptOutcome::VersionMismatch, AttemptOutcome::Ok]);
    assert_eq!(out.unwrap().adapter_id, AdapterId::new("beta"));
    let normalized: Vec<_> = f.log.snapshot().into_iter().filter(|e| e.kind == EventKind::Normalize).collect();
    assert_eq!(normalized.len(), 1);
    assert_eq!(normalized[0].payload["adapter_id"], "beta");
}

#[test]
fn version_verdicts() {
    let f = Fixture::new(vec![Stub::new("alpha", ResponseStatus::Ok)], DegradedMode::FailClosed);
    let mut raw = f.stubs[0].invoke(&envelope("t", "summarization", Tier::Verified));
    assert_eq!(verify_version(&raw, &f.pins), VersionVerdict::Match);
    raw.reported_version = "1.0.1".into();
    assert_eq!(verify_version(&raw, &f.pins), VersionVerdict::Mismatch);
    raw.adapter_id = "unpinned".into();
    assert_eq!(verify_version(&raw, &f.pins), VersionVerdict::Unpinned);
}

#[test]
fn strict_and_permissive_unpinned() {
    let taxonomy = DomainTaxonomy::default();
    let mut f = Fixture::new(vec![], DegradedMode::FailClosed);
    let stub = Arc::new(Stub::new("fresh", ResponseStatus::Ok));
    f.registry
        .register(AdapterDescriptor::new("fresh", "s", "1.0", ["summarization"]), stub, &taxonomy)
        .unwrap();
    for route in f.policy.domain.values_mut() {
        route.preference = vec!["fresh".into()];
    }
    assert_eq!(outcomes(&f.route().0), vec![AttemptOutcome::VersionMismatch]);
    f.policy.strict_pins = false;
    assert_eq!(outcomes(&f.route().0), vec![AttemptOutcome::Ok]);
}

#[test]
fn pins_need_admin_and_known_adapters() {
    let mut f = Fixture::new(vec![Stub::new("alpha", ResponseStatus::Ok)], DegradedMode::FailClosed);
    let reviewer = principals().get(&"reviewer-3".into()).unwrap().clone();
    let err = f.pins.pin_version(&"alpha".into(), "1.1", &reviewer, &f.registry, &f.log, Timestamp(1)).unwrap_err();
    assert_eq!(err, OrchestratorError::UnauthorizedPrincipal("reviewer-3".into()));
    let err = f.pins.pin_version(&"nobody".into(), "1.1", &admin(), &f.registry, &f.log, Timestamp(1)).unwrap_err();
    assert_eq!(err, OrchestratorError::UnknownAdapter("nobody".into()));
}

#[test]
fn rollback_appends_and_twice_returns() {
    let mut f = Fixture::new(vec![Stub::new("alpha", ResponseStatus::Ok)], DegradedMode::FailClosed);
    let id = AdapterId::new("alpha");
    let err = f.pins.rollback_version(&id, &admin(), &f.log, Timestamp(1)).unwrap_err();
    assert_eq!(err, OrchestratorError::NothingToRollback(id.clone()));

    f.pins.pin_version(&id, "1.2", &admin(), &f.registry, &f.log, Timestamp(1)).unwrap();
    f.pins.pin_version(&id, "1.3", &admin(), &f.registry, &f.log, Timestamp(2)).unwrap();
    assert_eq!(f.pins.rollback_version(&id, &admin(), &f.log, Timestamp(3)).unwrap(), "1.2");
    assert_eq!(f.pins.rollback_version(&id, &admin(), &f.log, Timestamp(4)).unwrap(), "1.3");
    let versions: Vec<_> = f.pins.get(&id).unwrap().history().iter().map(|e| e.version.as_str()).collect();
    assert_eq!(versions, ["1.0", "1.2", "1.3", "1.2", "1.3"]);
    assert_eq!(verify_chain(&f.log.snapshot()), ChainVerdict::Valid);
}

#[test]
fn attempts_logged_before_decision_and_normalize() {
    let f = Fixture::new(
        vec![Stub::new("alpha", ResponseStatus::Refused), Stub::new("beta", ResponseStatus::Ok)],
        DegradedMode::FailClosed,
    );
    f.route();
    let stages: Vec<String> = f
        .log
        .snapshot()
        .iter()
        .filter(|e| e.task_id.is_some())
        .map(|e| match e.kind {
            EventKind::RouteAttempt => e.payload["stage"].as_str().unwrap().to_owned(),
            k => k.as_str().to_owned(),
        })
        .collect();
    assert_eq!(stages, ["attempt", "attempt", "decision", "normalize"]);
}

#[test]
fn policy_toml_round_trip_and_validation() {
    let text = r#"
strict_pins = true

[domain.summarization]
preference = ["alpha", "beta"]
confidence_threshold = 0.5
degraded_mode = "queue_for_human"
"#;
    let p = RoutingPolicy::parse(text).unwrap();
    assert_eq!(RoutingPolicy::parse(&p.to_toml()).unwrap(), p);
    let route = p.route_for(&"summarization".into()).unwrap();
    assert_eq!(route.degraded_mode, DegradedMode::QueueForHuman);

    let f = Fixture::new(vec![Stub::new("alpha", ResponseStatus::Ok)], DegradedMode::FailClosed);
    let err = p.validate(&DomainTaxonomy::default(), &f.registry).unwrap_err();
    assert!(matches!(err, OrchestratorError::InvalidPolicy(m) if m.contains("beta")));
    assert!(RoutingPolicy::parse("[domain.x]\npreference = []\nconfidence_threshold = 0.5\ndegraded_mode = \"panic\"\n").is_err());
}
