//! Typed payloads for each event kind. The log stores them as JSON values;
//! [`AuditEvent::decode`](super::AuditEvent::decode) recovers the typed form.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::adapters::{AnalyticalOutput, OutputKind, ResponseStatus};
use crate::authority::{DecisionKind, ItemId};
use crate::clock::Timestamp;
use crate::constraints::{ConstraintVerdict, Outcome};
use crate::digest::Digest;
use crate::ingest::{IngestError, TaskEnvelope, UncertaintyFlag};
use crate::orchestrator::{AttemptOutcome, FinalState};
use crate::types::{AdapterId, PrincipalId, SourceId, Tier};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestStatus {
    Accepted,
    RejectedDomain,
    MalformedRequest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestPayload {
    pub status: IngestStatus,
    pub source_id: Option<SourceId>,
    /// The tag as submitted for rejections, the resolved tag otherwise.
    pub domain_tag: Option<String>,
    pub payload_digest: Option<Digest>,
    pub resolved_tier: Option<Tier>,
    pub uncertainty_flags: BTreeSet<UncertaintyFlag>,
    pub requested_by: Option<PrincipalId>,
    pub detail: Option<String>,
}

impl IngestPayload {
    pub fn accepted(env: &TaskEnvelope) -> Self {
        IngestPayload {
            status: IngestStatus::Accepted,
            source_id: Some(env.provenance.source_id.clone()),
            domain_tag: Some(env.domain_tag.as_str().to_owned()),
            payload_digest: Some(env.payload_digest),
            resolved_tier: Some(env.provenance.resolved_tier),
            uncertainty_flags: env.provenance.uncertainty_flags.clone(),
            requested_by: Some(env.requested_by.clone()),
            detail: None,
        }
    }

    pub fn rejected(err: &IngestError, raw: &crate::ingest::RawRequest) -> Self {
        let status = match err {
            IngestError::RejectedDomain { .. } => IngestStatus::RejectedDomain,
            IngestError::MalformedRequest { .. } => IngestStatus::MalformedRequest,
        };
        IngestPayload {
            status,
            source_id: raw.source_id.as_deref().map(SourceId::new),
            domain_tag: raw.domain_tag.clone(),
            payload_digest: raw.body.as_deref().map(|b| Digest::of(b.as_bytes())),
            resolved_tier: None,
            uncertainty_flags: BTreeSet::new(),
            requested_by: raw.requested_by.as_deref().map(PrincipalId::new),
            detail: Some(err.to_string()),
        }
    }
}

/// Which architecture made the routing choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Router {
    Sovereign,
    /// The supplier is wired in directly, with no sovereign gates.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum RoutePayload {
    Attempt {
        adapter_id: AdapterId,
        outcome: AttemptOutcome,
        status: Option<ResponseStatus>,
        reported_version: Option<String>,
        pinned_version: Option<String>,
        refusal_reason: Option<String>,
        confidence: Option<f64>,
        router: Router,
    },
    Decision {
        chosen_adapter: Option<AdapterId>,
        final_state: FinalState,
        attempts: usize,
        router: Router,
        reason: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputOrigin {
    Supplier,
    HumanOverride,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizePayload {
    pub origin: OutputOrigin,
    pub adapter_id: AdapterId,
    pub version_used: String,
    pub kind: OutputKind,
    pub content_digest: Digest,
    pub option_count: usize,
    pub confidence: f64,
    pub rationale_digest: Option<Digest>,
}

impl NormalizePayload {
    pub fn from_output(o: &AnalyticalOutput, origin: OutputOrigin) -> Self {
        NormalizePayload {
            origin,
            adapter_id: o.adapter_id.clone(),
            version_used: o.version_used.clone(),
            kind: o.kind,
            content_digest: o.content_digest(),
            option_count: o.options.len(),
            confidence: o.confidence,
            rationale_digest: o.rationale_digest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintStage {
    Primary,
    /// A human-modified output re-checked before authorization.
    OverrideRecheck,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintPayload {
    pub stage: ConstraintStage,
    pub outcome: Outcome,
    pub triggered_rules: Vec<String>,
    pub red_team_flags: BTreeSet<String>,
}

impl ConstraintPayload {
    pub fn new(stage: ConstraintStage, v: &ConstraintVerdict) -> Self {
        ConstraintPayload {
            stage,
            outcome: v.outcome,
            triggered_rules: v.triggered_rules.clone(),
            red_team_flags: v.red_team_flags.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnqueueReason {
    Checkpoint,
    ReviewRequired,
    RedTeamFlag,
    Degraded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnqueuePayload {
    pub item_id: ItemId,
    pub level: u8,
    pub reason: EnqueueReason,
    pub has_output: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionPayload {
    pub item_id: ItemId,
    pub principal: PrincipalId,
    pub decision: DecisionKind,
    pub rationale: String,
    pub level: u8,
    pub decided_at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationCause {
    Manual,
    Expired,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationPayload {
    pub from_item: ItemId,
    pub to_item: ItemId,
    pub new_level: u8,
    pub reason: String,
    pub cause: EscalationCause,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionOrigin {
    HumanAuthorization,
    /// Model-centric wiring: output flows straight to action.
    AutoApproveStub,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPayload {
    pub action_id: String,
    pub origin: ActionOrigin,
    pub authorizing_item: Option<ItemId>,
    pub principal: Option<PrincipalId>,
    pub decision: Option<DecisionKind>,
    pub effect_descriptor: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminPinPayload {
    pub adapter_id: AdapterId,
    pub version: String,
    pub principal: PrincipalId,
    pub history_len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollbackTarget {
    Version,
    Config,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminRollbackPayload {
    pub target: RollbackTarget,
    pub principal: PrincipalId,
    pub adapter_id: Option<AdapterId>,
    pub version: Option<String>,
    pub snapshot: Option<String>,
    pub history_len: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyReloadPayload {
    pub principal: PrincipalId,
    pub accepted: bool,
    pub rule_count: usize,
    pub ruleset_digest: Option<Digest>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioMarkerPayload {
    pub phase: String,
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub note: Option<String>,
}

/// Logged under [`EventKind::AdminSnapshot`](super::EventKind::AdminSnapshot).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminSnapshotPayload {
    pub principal: PrincipalId,
    pub snapshot: String,
    pub label: String,
    pub config_digest: Digest,
}

/// Where the trace places a task that has stopped moving.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalState {
    ActionIssued,
    Rejected,
    Denied,
    Degraded,
    Pending,
}

impl TerminalState {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalState::ActionIssued => "action_issued",
            TerminalState::Rejected => "rejected",
            TerminalState::Denied => "denied",
            TerminalState::Degraded => "degraded",
            TerminalState::Pending => "pending",
        }
    }
}
