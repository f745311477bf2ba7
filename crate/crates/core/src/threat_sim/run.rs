use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::score::{concentration_metric, score_sovereignty, unauthorized_actions, SovereigntyScorecard, DRIFT_THRESHOLD};
use super::{ArchitectureMode, ScenarioError, ThreatScenario};
use crate::adapters::{normalize, AdapterRegistry, ResponseStatus, ScriptedSupplier};
use crate::audit::events::{
    ActionOrigin, ActionPayload, IngestPayload, NormalizePayload, OutputOrigin, RoutePayload, Router,
    ScenarioMarkerPayload, TerminalState,
};
use crate::audit::{all_traces, to_ndjson, AuditEvent, AuditLog, EventKind};
use crate::authority::{DecisionKind, PendingItem, PrincipalRegistry};
use crate::clock::{Clock, LogicalClock};
use crate::constraints::{load_ruleset, Outcome};
use crate::digest::Hasher;
use crate::gateway::{Gateway, GatewayError};
use crate::ingest::{Ingestor, RawRequest, SourceRegistry};
use crate::orchestrator::{AttemptOutcome, FinalState};
use crate::types::{AdapterId, DomainTaxonomy, PrincipalId};

/// Stands in for human reviewers: approves an item iff it carries an output
/// whose verdict is admissible with no red-team flags; otherwise escalates,
/// and rejects at the top level.
#[derive(Clone, Copy, Debug)]
pub struct ScriptedReviewer {
    pub max_level: u8,
}

impl ScriptedReviewer {
    pub fn principal_for(level: u8) -> PrincipalId {
        PrincipalId::new(format!("reviewer-{level}"))
    }

    pub fn approves(item: &PendingItem) -> bool {
        item.output.is_some()
            && item.verdict.as_ref().is_some_and(|v| v.outcome == Outcome::Admissible && v.red_team_flags.is_empty())
    }

    /// Acts on one pending item and returns the task's new state.
    pub fn act(&self, gw: &Gateway, item: &PendingItem) -> Result<TerminalState, GatewayError> {
        let who = Self::principal_for(item.level);
        if Self::approves(item) {
            let out = gw.decide(&item.item_id, &who, DecisionKind::Approve, "admissible, no flags", None)?;
            Ok(out.state)
        } else if item.level < self.max_level {
            gw.escalate(&item.item_id, "needs higher authority")?;
            Ok(TerminalState::Pending)
        } else {
            let reason = if item.output.is_none() { "no vetted output" } else { "not cleared at top level" };
            Ok(gw.decide(&item.item_id, &who, DecisionKind::Reject, reason, None)?.state)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub tasks: usize,
    pub terminal: BTreeMap<String, usize>,
    pub actions: usize,
    pub unauthorized_actions: usize,
    pub routed: usize,
    pub concentration: f64,
    pub drift_warning: bool,
}

#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub scenario: ThreatScenario,
    pub events: Vec<AuditEvent>,
    pub scorecard: SovereigntyScorecard,
    pub summary: RunSummary,
}

impl ScenarioReport {
    pub fn ndjson(&self) -> String {
        to_ndjson(&self.events)
    }

    /// Structured text form of the scorecard and summary.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario_id": self.scenario.scenario_id,
            "mode": self.scenario.mode,
            "seed": self.scenario.seed,
            "scorecard": self.scorecard,
            "summary": self.summary,
        })
    }
}

/// Concentration windows are a quarter of the routed run.
fn window_for(tasks: usize) -> usize {
    (tasks / 4).max(1)
}

pub(crate) fn generate_workload(s: &ThreatScenario) -> Result<Vec<RawRequest>, ScenarioError> {
    let w = &s.workload;
    let total: u32 = w.domains.values().sum();
    if total == 0 || w.sources.is_empty() {
        return Err(ScenarioError::InvalidScenario("workload needs domain weights and sources".into()));
    }
    let mut h = Hasher::new();
    h.field(b"workload").update(&s.seed.to_be_bytes()).field(s.scenario_id.as_str().as_bytes());
    let mut rng = ChaCha8Rng::from_seed(*h.finish().as_bytes());
    Ok((0..w.count)
        .map(|i| {
            let mut pick = rng.random_range(0..total);
            let domain = w
                .domains
                .iter()
                .find(|(_, weight)| {
                    if pick < **weight {
                        true
                    } else {
                        pick -= **weight;
                        false
                    }
                })
                .map(|(d, _)| d.as_str())
                .expect("weights cover the draw");
            let source = &w.sources[rng.random_range(0..w.sources.len())];
            let body = format!("{} request {i} ref {:016x}", s.scenario_id, rng.random::<u64>());
            RawRequest::new(source, domain, &body, "ops-desk")
        })
        .collect())
}

struct Parts {
    taxonomy: DomainTaxonomy,
    sources: SourceRegistry,
    principals: PrincipalRegistry,
    registry: AdapterRegistry,
}

fn invalid(what: &str, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::InvalidScenario(format!("{what}: {e}"))
}

fn parts(s: &ThreatScenario) -> Result<Parts, ScenarioError> {
    let taxonomy = DomainTaxonomy::default();
    let sources = SourceRegistry::parse(&s.sources).map_err(|e| invalid("sources", e))?;
    let principals = PrincipalRegistry::parse(&s.principals).map_err(|e| invalid("principals", e))?;
    for level in 1..=s.max_escalation_level {
        let id = ScriptedReviewer::principal_for(level);
        if !principals.get(&id).is_some_and(|p| p.clearance >= level) {
            return Err(invalid("principals", format!("no `{id}` cleared for level {level}")));
        }
    }
    let mut registry = AdapterRegistry::new();
    for spec in &s.adapter {
        let d = spec.descriptor();
        let supplier = Arc::new(ScriptedSupplier::new(&d, spec.model_seed, spec.script.clone()));
        registry.register(d, supplier, &taxonomy).map_err(|e| invalid("adapter", e))?;
    }
    Ok(Parts { taxonomy, sources, principals, registry })
}

fn marker(log: &AuditLog, s: &ThreatScenario, phase: &str) {
    log.append(
        EventKind::ScenarioMarker,
        None,
        &ScenarioMarkerPayload {
            phase: phase.into(),
            scenario: s.scenario_id.to_string(),
            mode: s.mode.to_string(),
            seed: s.seed,
            note: None,
        },
    );
}

fn run_sovereign(s: &ThreatScenario, p: Parts, workload: &[RawRequest]) -> Result<Vec<AuditEvent>, ScenarioError> {
    let ruleset = load_ruleset(&s.ruleset, &p.taxonomy).map_err(|e| invalid("ruleset", e))?;
    let log = AuditLog::new();
    marker(&log, s, "start");
    let mut builder = Gateway::builder(p.taxonomy)
        .sources(p.sources)
        .principals(p.principals)
        .registry(p.registry)
        .policy(s.routing.clone())
        .ruleset(ruleset)
        .max_level(s.max_escalation_level)
        .log(log);
    for spec in &s.adapter {
        if let Some(v) = &spec.pin {
            builder = builder.pin(&spec.adapter_id, v);
        }
    }
    let gw = builder.build().map_err(|e| invalid("configuration", e))?;
    let reviewer = ScriptedReviewer { max_level: gw.queue().max_level() };
    for raw in workload {
        let status = gw.process_task(raw);
        let mut state = status.state;
        while state == TerminalState::Pending {
            let item = gw
                .queue()
                .items_for_task(&status.task_id)
                .into_iter()
                .find(|i| i.state == crate::authority::ItemState::Pending)
                .expect("pending task has an open item");
            state = reviewer.act(&gw, &item).map_err(|e| invalid("review", e))?;
        }
    }
    marker(gw.log(), s, "end");
    Ok(gw.log().snapshot())
}

fn run_model_centric(s: &ThreatScenario, p: Parts, workload: &[RawRequest]) -> Result<Vec<AuditEvent>, ScenarioError> {
    let primary = s.primary().ok_or_else(|| invalid("adapter", "scenario has no adapters"))?;
    let primary_id = AdapterId::new(primary.adapter_id.as_str());
    let entry = p.registry.get(&primary_id).map_err(|e| invalid("adapter", e))?;
    let log = AuditLog::new();
    let clock = LogicalClock::new();
    let ingestor = Ingestor::new(p.taxonomy);
    marker(&log, s, "start");
    let mut next_action = 0u64;
    for raw in workload {
        let env = match ingestor.ingest_task(raw, &p.sources, clock.now()) {
            Ok(env) => env,
            Err(e) => {
                log.append(EventKind::Ingest, Some(e.task_id()), &IngestPayload::rejected(&e, raw));
                continue;
            }
        };
        let task = &env.task_id;
        log.append(EventKind::Ingest, Some(task), &IngestPayload::accepted(&env));
        let resp = entry.supplier.invoke(&env);
        let normalized = match resp.status {
            ResponseStatus::Ok | ResponseStatus::Malformed => normalize(&resp, &entry.descriptor, task, clock.now()).ok(),
            _ => None,
        };
        let outcome = match (resp.status, &normalized) {
            (_, Some(_)) => AttemptOutcome::Ok,
            (ResponseStatus::Refused, _) => AttemptOutcome::Refused,
            (ResponseStatus::Unavailable, _) => AttemptOutcome::Unavailable,
            _ => AttemptOutcome::Malformed,
        };
        log.append(
            EventKind::RouteAttempt,
            Some(task),
            &RoutePayload::Attempt {
                adapter_id: primary_id.clone(),
                outcome,
                status: Some(resp.status),
                reported_version: Some(resp.reported_version.clone()),
                pinned_version: None,
                refusal_reason: resp.refusal_reason.clone(),
                confidence: normalized.as_ref().map(|o| o.confidence),
                router: Router::Direct,
            },
        );
        let routed = normalized.is_some();
        log.append(
            EventKind::RouteAttempt,
            Some(task),
            &RoutePayload::Decision {
                chosen_adapter: routed.then(|| primary_id.clone()),
                final_state: if routed { FinalState::Routed } else { FinalState::DegradedFailClosed },
                attempts: 1,
                router: Router::Direct,
                reason: (!routed).then(|| "supplier_response".to_owned()),
            },
        );
        let Some(out) = normalized else { continue };
        log.append(EventKind::Normalize, Some(task), &NormalizePayload::from_output(&out, OutputOrigin::Supplier));
        next_action += 1;
        log.append(
            EventKind::Action,
            Some(task),
            &ActionPayload {
                action_id: format!("auto-{next_action:06}"),
                origin: ActionOrigin::AutoApproveStub,
                authorizing_item: None,
                principal: None,
                decision: None,
                effect_descriptor: format!("adopt:{}", out.kind.as_str()),
            },
        );
    }
    marker(&log, s, "end");
    Ok(log.snapshot())
}

/// Runs a scenario to completion in its configured mode.
pub fn run_scenario(s: &ThreatScenario) -> Result<ScenarioReport, ScenarioError> {
    let workload = generate_workload(s)?;
    let p = parts(s)?;
    let events = match s.mode {
        ArchitectureMode::SovereigntyCentric => run_sovereign(s, p, &workload)?,
        ArchitectureMode::ModelCentric => run_model_centric(s, p, &workload)?,
    };
    let scorecard = score_sovereignty(&events).expect("a fresh run log verifies");
    let traces = all_traces(&events);
    let mut terminal = BTreeMap::new();
    for t in &traces {
        *terminal.entry(t.terminal_state.as_str().to_owned()).or_insert(0) += 1;
    }
    let routed = traces.iter().filter(|t| t.model_choice.is_populated()).count();
    let concentration = concentration_metric(&events, window_for(routed));
    let summary = RunSummary {
        tasks: traces.len(),
        terminal,
        actions: events.iter().filter(|e| e.kind == EventKind::Action).count(),
        unauthorized_actions: unauthorized_actions(&events),
        routed,
        concentration,
        drift_warning: concentration >= DRIFT_THRESHOLD,
    };
    Ok(ScenarioReport { scenario: s.clone(), events, scorecard, summary })
}
