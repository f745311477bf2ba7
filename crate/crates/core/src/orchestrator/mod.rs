//! Layer 3: sovereign routing, fallback, confidence gates and version pins.
//!
//! Routing reads immutable snapshots of the registry, policy and pins taken
//! when the task starts. The walk over a domain's preference list is:
//!
//! 1. skip adapters not certified for the domain or reported withdrawn;
//! 2. invoke and check the reported version against the pin;
//! 3. record refusals and unavailability and move on;
//! 4. normalize, then apply the domain's confidence gate;
//! 5. the first attempt that clears every gate wins.
//!
//! When the list is exhausted the domain's [`DegradedMode`] decides.

mod pins;
mod policy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{normalize, AdapterRegistry, Availability, AnalyticalOutput, RawSupplierResponse, ResponseStatus};
use crate::audit::events::{NormalizePayload, OutputOrigin, RoutePayload, Router};
use crate::audit::{AuditLog, EventKind};
use crate::clock::Clock;
use crate::ingest::TaskEnvelope;
use crate::types::{AdapterId, DomainTag, PrincipalId, TaskId};

pub use pins::{PinEntry, PinStore, VersionPin};
pub use policy::{DegradedMode, DomainRoute, RoutingPolicy};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OrchestratorError {
    #[error("unknown adapter `{0}`")]
    UnknownAdapter(AdapterId),
    #[error("principal `{0}` is not authorized for admin operations")]
    UnauthorizedPrincipal(PrincipalId),
    #[error("adapter `{0}` has no earlier pin to roll back to")]
    NothingToRollback(AdapterId),
    #[error("domain `{0}` has no routing policy")]
    UnconfiguredDomain(DomainTag),
    #[error("invalid routing policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Ok,
    Refused,
    Unavailable,
    VersionMismatch,
    LowConfidence,
    /// Listed in the policy but not certified for the task's domain.
    Uncertified,
    /// The response did not normalize.
    Malformed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalState {
    Routed,
    DegradedFailClosed,
    DegradedQueued,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub adapter_id: AdapterId,
    pub outcome: AttemptOutcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub task_id: TaskId,
    /// `None` is the DEGRADED marker; set iff `final_state` is not `Routed`.
    pub chosen_adapter: Option<AdapterId>,
    pub attempts: Vec<Attempt>,
    pub final_state: FinalState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VersionVerdict {
    Match,
    Mismatch,
    Unpinned,
}

pub fn verify_version(raw: &RawSupplierResponse, pins: &PinStore) -> VersionVerdict {
    match pins.pinned_version(&raw.adapter_id) {
        None => VersionVerdict::Unpinned,
        Some(v) if v == raw.reported_version => VersionVerdict::Match,
        Some(_) => VersionVerdict::Mismatch,
    }
}

/// Everything a routing walk reads, captured at task start.
pub struct RouteContext<'a> {
    pub registry: &'a AdapterRegistry,
    pub policy: &'a RoutingPolicy,
    pub pins: &'a PinStore,
    pub log: &'a AuditLog,
    pub clock: &'a dyn Clock,
}

struct Walk<'a, 'b> {
    ctx: &'b RouteContext<'a>,
    envelope: &'b TaskEnvelope,
    threshold: f64,
    attempts: Vec<Attempt>,
}

impl Walk<'_, '_> {
    fn record(&mut self, adapter_id: &AdapterId, outcome: AttemptOutcome, raw: Option<&RawSupplierResponse>, confidence: Option<f64>) {
        self.attempts.push(Attempt { adapter_id: adapter_id.clone(), outcome });
        self.ctx.log.append(
            EventKind::RouteAttempt,
            Some(&self.envelope.task_id),
            &RoutePayload::Attempt {
                adapter_id: adapter_id.clone(),
                outcome,
                status: raw.map(|r| r.status),
                reported_version: raw.map(|r| r.reported_version.clone()),
                pinned_version: self.ctx.pins.pinned_version(adapter_id).map(str::to_owned),
                refusal_reason: raw.and_then(|r| r.refusal_reason.clone()),
                confidence,
                router: Router::Sovereign,
            },
        );
    }

    fn try_adapter(&mut self, id: &AdapterId) -> Option<AnalyticalOutput> {
        let ctx = self.ctx;
        let Ok(entry) = ctx.registry.get(id) else {
            self.record(id, AttemptOutcome::Unavailable, None, None);
            return None;
        };
        if !entry.descriptor.certified_domains.contains(&self.envelope.domain_tag) {
            self.record(id, AttemptOutcome::Uncertified, None, None);
            return None;
        }
        if ctx.registry.health_probe(id).ok() == Some(Availability::Withdrawn) {
            self.record(id, AttemptOutcome::Unavailable, None, None);
            return None;
        }
        let raw = entry.supplier.invoke(self.envelope);
        let version_ok = match verify_version(&raw, ctx.pins) {
            VersionVerdict::Match => true,
            VersionVerdict::Unpinned => !ctx.policy.strict_pins,
            VersionVerdict::Mismatch => false,
        };
        if !version_ok {
            self.record(id, AttemptOutcome::VersionMismatch, Some(&raw), None);
            return None;
        }
        match raw.status {
            ResponseStatus::Refused => {
                self.record(id, AttemptOutcome::Refused, Some(&raw), None);
                return None;
            }
            ResponseStatus::Unavailable => {
                self.record(id, AttemptOutcome::Unavailable, Some(&raw), None);
                return None;
            }
            ResponseStatus::Ok | ResponseStatus::Malformed => {}
        }
        let Ok(output) = normalize(&raw, &entry.descriptor, &self.envelope.task_id, ctx.clock.now()) else {
            self.record(id, AttemptOutcome::Malformed, Some(&raw), None);
            return None;
        };
        if output.confidence < self.threshold {
            self.record(id, AttemptOutcome::LowConfidence, Some(&raw), Some(output.confidence));
            return None;
        }
        self.record(id, AttemptOutcome::Ok, Some(&raw), Some(output.confidence));
        Some(output)
    }
}

/// Routes one task. Attempts, the decision, and the accepted output's
/// normalization are each logged in that order.
pub fn route(
    envelope: &TaskEnvelope,
    ctx: &RouteContext<'_>,
) -> Result<(RoutingDecision, Option<AnalyticalOutput>), OrchestratorError> {
    let task_id = &envelope.task_id;
    let Some(domain_route) = ctx.policy.route_for(&envelope.domain_tag) else {
        ctx.log.append(
            EventKind::RouteAttempt,
            Some(task_id),
            &RoutePayload::Decision {
                chosen_adapter: None,
                final_state: FinalState::DegradedFailClosed,
                attempts: 0,
                router: Router::Sovereign,
                reason: Some("unconfigured_domain".into()),
            },
        );
        return Err(OrchestratorError::UnconfiguredDomain(envelope.domain_tag.clone()));
    };

    let mut walk = Walk { ctx, envelope, threshold: domain_route.confidence_threshold, attempts: Vec::new() };
    let mut output = domain_route.preference.iter().find_map(|id| walk.try_adapter(id));
    let mut reason = None;
    if output.is_none() && domain_route.degraded_mode == DegradedMode::InternalOnly {
        reason = Some("internal_only".to_owned());
        output = domain_route.internal_fallback.iter().find_map(|id| walk.try_adapter(id));
    }

    let (chosen_adapter, final_state) = match &output {
        Some(o) => (Some(o.adapter_id.clone()), FinalState::Routed),
        None => match domain_route.degraded_mode {
            DegradedMode::QueueForHuman => (None, FinalState::DegradedQueued),
            DegradedMode::FailClosed | DegradedMode::InternalOnly => (None, FinalState::DegradedFailClosed),
        },
    };
    if output.is_none() {
        reason.get_or_insert_with(|| "exhausted".to_owned());
    }
    ctx.log.append(
        EventKind::RouteAttempt,
        Some(task_id),
        &RoutePayload::Decision {
            chosen_adapter: chosen_adapter.clone(),
            final_state,
            attempts: walk.attempts.len(),
            router: Router::Sovereign,
            reason,
        },
    );
    if let Some(o) = &output {
        ctx.log.append(EventKind::Normalize, Some(task_id), &NormalizePayload::from_output(o, OutputOrigin::Supplier));
    }
    let decision = RoutingDecision { task_id: task_id.clone(), chosen_adapter, attempts: walk.attempts, final_state };
    Ok((decision, output))
}

#[cfg(test)]
mod tests;
