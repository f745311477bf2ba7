//! Decision-trace reconstruction and completeness reporting. Both are pure
//! functions of the event slice they are given.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{
    ActionOrigin, ActionPayload, ConstraintPayload, DecisionPayload, EscalationPayload, IngestPayload, IngestStatus,
    NormalizePayload, OutputOrigin, RoutePayload, TerminalState,
};
use super::{AuditEvent, EventKind};
use crate::authority::{DecisionKind, ItemId};
use crate::constraints::Outcome;
use crate::digest::Digest;
use crate::ingest::UncertaintyFlag;
use crate::orchestrator::{AttemptOutcome, FinalState};
use crate::types::{AdapterId, PrincipalId, TaskId, Tier};

/// Field names in trace order, plus the rationale sub-field.
pub const TRACE_FIELDS: [&str; 8] = [
    "model_choice",
    "version",
    "prompt",
    "context_boundaries",
    "rule_triggers",
    "human_interventions",
    "action_outcome",
    "rationale",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum TraceField<T> {
    Populated(T),
    /// Legitimately absent, with the early-termination reason.
    NotApplicable(String),
    Missing,
}

impl<T> TraceField<T> {
    pub fn is_missing(&self) -> bool {
        matches!(self, TraceField::Missing)
    }

    pub fn is_populated(&self) -> bool {
        matches!(self, TraceField::Populated(_))
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            TraceField::Populated(v) => Some(v),
            _ => None,
        }
    }

    fn na(reason: &str) -> Self {
        TraceField::NotApplicable(reason.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBoundaries {
    pub domain_tag: String,
    pub tier: Option<Tier>,
    pub uncertainty_flags: BTreeSet<UncertaintyFlag>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HumanIntervention {
    Decision { item_id: ItemId, principal: PrincipalId, decision: DecisionKind, rationale: String, level: u8 },
    Escalation { from_item: ItemId, to_item: ItemId, new_level: u8, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub action_id: String,
    pub origin: ActionOrigin,
    pub authorizing_item: Option<ItemId>,
    pub principal: Option<PrincipalId>,
    pub effect_descriptor: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteStep {
    pub adapter_id: AdapterId,
    pub outcome: AttemptOutcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub task_id: TaskId,
    pub terminal_state: TerminalState,
    pub model_choice: TraceField<AdapterId>,
    pub version: TraceField<String>,
    pub prompt: TraceField<Digest>,
    pub context_boundaries: TraceField<ContextBoundaries>,
    pub rule_triggers: TraceField<Vec<String>>,
    pub human_interventions: TraceField<Vec<HumanIntervention>>,
    pub action_outcome: TraceField<ActionOutcome>,
    /// Required whenever an analytical output exists.
    pub rationale: TraceField<Digest>,
    /// The routing walk, for inspection. Not one of the trace fields.
    pub routing_path: Vec<RouteStep>,
    pub constraint_outcome: Option<Outcome>,
}

impl DecisionTrace {
    /// Names of the fields that are neither populated nor not-applicable.
    pub fn missing_fields(&self) -> Vec<&'static str> {
        let flags = [
            self.model_choice.is_missing(),
            self.version.is_missing(),
            self.prompt.is_missing(),
            self.context_boundaries.is_missing(),
            self.rule_triggers.is_missing(),
            self.human_interventions.is_missing(),
            self.action_outcome.is_missing(),
            self.rationale.is_missing(),
        ];
        TRACE_FIELDS.iter().zip(flags).filter(|(_, m)| *m).map(|(n, _)| *n).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_fields().is_empty()
    }

    /// True when all seven trace fields carry a value.
    pub fn fully_populated(&self) -> bool {
        self.model_choice.is_populated()
            && self.version.is_populated()
            && self.prompt.is_populated()
            && self.context_boundaries.is_populated()
            && self.rule_triggers.is_populated()
            && self.human_interventions.is_populated()
            && self.action_outcome.is_populated()
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("task `{0}` does not appear in the log")]
    UnknownTask(TaskId),
}

#[derive(Default)]
struct Facts {
    ingest: Option<IngestPayload>,
    routing_path: Vec<RouteStep>,
    route_final: Option<FinalState>,
    supplier_output: Option<NormalizePayload>,
    constraints: Vec<ConstraintPayload>,
    interventions: Vec<HumanIntervention>,
    last_decision: Option<DecisionKind>,
    action: Option<ActionPayload>,
    open_items: BTreeSet<ItemId>,
}

impl Facts {
    fn absorb(&mut self, ev: &AuditEvent) {
        match ev.kind {
            EventKind::Ingest => self.ingest = ev.decode(),
            EventKind::RouteAttempt => match ev.decode::<RoutePayload>() {
                Some(RoutePayload::Attempt { adapter_id, outcome, .. }) => {
                    self.routing_path.push(RouteStep { adapter_id, outcome })
                }
                Some(RoutePayload::Decision { final_state, .. }) => self.route_final = Some(final_state),
                None => {}
            },
            EventKind::Normalize => {
                if let Some(p) = ev.decode::<NormalizePayload>() {
                    if p.origin == OutputOrigin::Supplier {
                        self.supplier_output = Some(p);
                    }
                }
            }
            EventKind::ConstraintVerdict => self.constraints.extend(ev.decode::<ConstraintPayload>()),
            EventKind::Enqueue => {
                if let Some(id) = ev.payload.get("item_id").and_then(|v| v.as_str()) {
                    self.open_items.insert(ItemId::new(id));
                }
            }
            EventKind::HumanDecision => {
                if let Some(p) = ev.decode::<DecisionPayload>() {
                    self.open_items.remove(&p.item_id);
                    self.last_decision = Some(p.decision);
                    self.interventions.push(HumanIntervention::Decision {
                        item_id: p.item_id,
                        principal: p.principal,
                        decision: p.decision,
                        rationale: p.rationale,
                        level: p.level,
                    });
                }
            }
            EventKind::Escalation => {
                if let Some(p) = ev.decode::<EscalationPayload>() {
                    self.open_items.remove(&p.from_item);
                    self.open_items.insert(p.to_item.clone());
                    self.interventions.push(HumanIntervention::Escalation {
                        from_item: p.from_item,
                        to_item: p.to_item,
                        new_level: p.new_level,
                        reason: p.reason,
                    });
                }
            }
            EventKind::Action => self.action = ev.decode(),
            _ => {}
        }
    }

    fn ingest_rejected(&self) -> bool {
        self.ingest.as_ref().is_some_and(|i| i.status != IngestStatus::Accepted)
    }

    fn denied(&self) -> bool {
        self.constraints.last().is_some_and(|c| c.outcome == Outcome::Denied)
    }

    fn terminal(&self) -> TerminalState {
        if self.action.is_some() {
            TerminalState::ActionIssued
        } else if self.ingest_rejected() {
            TerminalState::Rejected
        } else if self.denied() {
            TerminalState::Denied
        } else if !self.open_items.is_empty() {
            TerminalState::Pending
        } else if self.last_decision == Some(DecisionKind::Reject) {
            TerminalState::Rejected
        } else if self.route_final == Some(FinalState::DegradedFailClosed) {
            TerminalState::Degraded
        } else {
            TerminalState::Pending
        }
    }

    fn into_trace(self, task_id: TaskId) -> DecisionTrace {
        let terminal = self.terminal();
        let no_output_reason = if self.ingest_rejected() {
            Some("ingest_rejected")
        } else if self.supplier_output.is_none() && self.route_final.is_some_and(|f| f != FinalState::Routed) {
            Some("degraded")
        } else {
            None
        };

        let (model_choice, version, rationale) = match (&self.supplier_output, no_output_reason) {
            (Some(o), _) => (
                TraceField::Populated(o.adapter_id.clone()),
                TraceField::Populated(o.version_used.clone()),
                o.rationale_digest.map(TraceField::Populated).unwrap_or(TraceField::Missing),
            ),
            (None, Some(r)) => (TraceField::na(r), TraceField::na(r), TraceField::na(r)),
            (None, None) => (TraceField::Missing, TraceField::Missing, TraceField::Missing),
        };

        let prompt = match self.ingest.as_ref().and_then(|i| i.payload_digest) {
            Some(d) => TraceField::Populated(d),
            None if self.ingest_rejected() => TraceField::na("ingest_rejected"),
            None => TraceField::Missing,
        };
        let context_boundaries = match (&self.ingest, self.ingest_rejected()) {
            (Some(i), false) => match &i.domain_tag {
                Some(tag) => TraceField::Populated(ContextBoundaries {
                    domain_tag: tag.clone(),
                    tier: i.resolved_tier,
                    uncertainty_flags: i.uncertainty_flags.clone(),
                }),
                None => TraceField::Missing,
            },
            (Some(_), true) => TraceField::na("ingest_rejected"),
            (None, _) => TraceField::Missing,
        };

        let rule_triggers = if !self.constraints.is_empty() {
            let mut seen = BTreeSet::new();
            let rules = self
                .constraints
                .iter()
                .flat_map(|c| c.triggered_rules.iter())
                .filter(|r| seen.insert(r.as_str()))
                .cloned()
                .collect();
            TraceField::Populated(rules)
        } else if let Some(r) = no_output_reason {
            TraceField::na(r)
        } else {
            TraceField::Missing
        };

        let human_interventions = if !self.interventions.is_empty() {
            TraceField::Populated(self.interventions.clone())
        } else {
            match terminal {
                TerminalState::Denied => TraceField::na("denied"),
                TerminalState::Rejected if self.ingest_rejected() => TraceField::na("ingest_rejected"),
                TerminalState::Degraded => TraceField::na("degraded"),
                _ => TraceField::Missing,
            }
        };

        let action_outcome = match (&self.action, terminal) {
            (Some(a), _) => TraceField::Populated(ActionOutcome {
                action_id: a.action_id.clone(),
                origin: a.origin,
                authorizing_item: a.authorizing_item.clone(),
                principal: a.principal.clone(),
                effect_descriptor: a.effect_descriptor.clone(),
            }),
            (None, TerminalState::Pending) => TraceField::Missing,
            (None, t) => TraceField::NotApplicable(t.as_str().to_owned()),
        };

        DecisionTrace {
            task_id,
            terminal_state: terminal,
            model_choice,
            version,
            prompt,
            context_boundaries,
            rule_triggers,
            human_interventions,
            action_outcome,
            rationale,
            routing_path: self.routing_path,
            constraint_outcome: self.constraints.last().map(|c| c.outcome),
        }
    }
}

/// Assembles the trace of one task from its events.
pub fn reconstruct_trace(task_id: &TaskId, events: &[AuditEvent]) -> Result<DecisionTrace, TraceError> {
    let mut facts = Facts::default();
    let mut seen = false;
    for ev in events.iter().filter(|e| e.task_id.as_ref() == Some(task_id)) {
        seen = true;
        facts.absorb(ev);
    }
    if !seen {
        return Err(TraceError::UnknownTask(task_id.clone()));
    }
    Ok(facts.into_trace(task_id.clone()))
}

/// Task ids in order of first appearance.
pub fn task_ids(events: &[AuditEvent]) -> Vec<TaskId> {
    let mut seen = BTreeSet::new();
    events.iter().filter_map(|e| e.task_id.as_ref()).filter(|t| seen.insert(*t)).cloned().collect()
}

/// Reconstructs every task's trace in one pass.
pub fn all_traces(events: &[AuditEvent]) -> Vec<DecisionTrace> {
    let order = task_ids(events);
    let mut facts: BTreeMap<&TaskId, Facts> = BTreeMap::new();
    for ev in events {
        if let Some(t) = &ev.task_id {
            facts.entry(t).or_default().absorb(ev);
        }
    }
    order.into_iter().map(|t| facts.remove(&t).unwrap_or_default().into_trace(t)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCompleteness {
    pub tasks_total: usize,
    pub tasks_complete_trace: usize,
    pub completeness_ratio: f64,
    pub missing_field_histogram: BTreeMap<String, usize>,
}

pub fn completeness_report(events: &[AuditEvent]) -> AuditCompleteness {
    let traces = all_traces(events);
    let mut histogram = BTreeMap::new();
    let mut complete = 0;
    for t in &traces {
        let missing = t.missing_fields();
        if missing.is_empty() {
            complete += 1;
        }
        for f in missing {
            *histogram.entry(f.to_owned()).or_insert(0) += 1;
        }
    }
    let total = traces.len();
    AuditCompleteness {
        tasks_total: total,
        tasks_complete_trace: complete,
        completeness_ratio: if total == 0 { 1.0 } else { complete as f64 / total as f64 },
        missing_field_histogram: histogram,
    }
}
