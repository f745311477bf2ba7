//! Layer 5: human review, contestation, escalation, and action authorization.
//!
//! [`ReviewQueue::authorize_action`] is the only constructor of
//! [`ActionRecord`] in the crate, and it accepts nothing but an
//! [`AuthorizationDecision`], which in turn only [`ReviewQueue::decide`]
//! can produce. Analytical output has no path to an action that does not go
//! through a registered human principal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::AnalyticalOutput;
use crate::audit::events::{
    ActionOrigin, ActionPayload, DecisionPayload, EnqueuePayload, EnqueueReason, EscalationCause, EscalationPayload,
};
use crate::audit::{AuditLog, EventKind};
use crate::clock::Timestamp;
use crate::constraints::{ConstraintVerdict, Outcome};
use crate::textfmt::{self, LineError};
use crate::types::{PrincipalId, TaskId};

pub const DEFAULT_MAX_LEVEL: u8 = 3;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(s: impl Into<String>) -> Self {
        ItemId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A registered human reviewer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub id: PrincipalId,
    pub display_name: String,
    /// Highest escalation level this principal may decide.
    pub clearance: u8,
    pub admin: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PrincipalRegistry {
    principals: BTreeMap<PrincipalId, Principal>,
}

impl PrincipalRegistry {
    /// Parses `principal_id | display name | max clearance [| admin]` lines.
    pub fn parse(text: &str) -> Result<Self, LineError> {
        let mut principals = BTreeMap::new();
        for (line, fields) in textfmt::records(text) {
            let err = |message: String| LineError { line, message };
            let (id, name, clearance, admin) = match fields[..] {
                [id, name, c] => (id, name, c, false),
                [id, name, c, "admin"] => (id, name, c, true),
                [_, _, _, other] => return Err(err(format!("unknown role `{other}`"))),
                _ => return Err(err(format!("expected 3 or 4 fields, found {}", fields.len()))),
            };
            if id.is_empty() {
                return Err(err("empty principal_id".into()));
            }
            let clearance: u8 = clearance.parse().map_err(|_| err(format!("bad clearance `{clearance}`")))?;
            if clearance == 0 {
                return Err(err("clearance must be at least 1".into()));
            }
            let p = Principal { id: PrincipalId::new(id), display_name: name.to_owned(), clearance, admin };
            if principals.insert(p.id.clone(), p).is_some() {
                return Err(err(format!("duplicate principal `{id}`")));
            }
        }
        Ok(PrincipalRegistry { principals })
    }

    pub fn get(&self, id: &PrincipalId) -> Option<&Principal> {
        self.principals.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Principal> {
        self.principals.values()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Pending,
    Approved,
    Rejected,
    Escalated,
    Expired,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Approve,
    Reject,
    OverrideModify,
}

impl DecisionKind {
    pub fn authorizes(self) -> bool {
        matches!(self, DecisionKind::Approve | DecisionKind::OverrideModify)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingItem {
    pub item_id: ItemId,
    pub task_id: TaskId,
    /// Absent for tasks queued by a degraded routing walk.
    pub output: Option<AnalyticalOutput>,
    pub verdict: Option<ConstraintVerdict>,
    pub level: u8,
    pub state: ItemState,
    pub created_at: Timestamp,
    pub escalated_from: Option<ItemId>,
}

/// A human decision. Only [`ReviewQueue::decide`] constructs one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuthorizationDecision {
    item_id: ItemId,
    task_id: TaskId,
    principal: PrincipalId,
    decision: DecisionKind,
    rationale_text: String,
    decided_at: Timestamp,
}

impl AuthorizationDecision {
    pub fn item_id(&self) -> &ItemId {
        &self.item_id
    }
    pub fn task_id(&self) -> &TaskId {
        &self.task_id
    }
    pub fn principal(&self) -> &PrincipalId {
        &self.principal
    }
    pub fn decision(&self) -> DecisionKind {
        self.decision
    }
    pub fn rationale_text(&self) -> &str {
        &self.rationale_text
    }
    pub fn decided_at(&self) -> Timestamp {
        self.decided_at
    }
}

/// An inert record of an authorized operational decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ActionRecord {
    action_id: String,
    task_id: TaskId,
    authorizing_decision: AuthorizationDecision,
    effect_descriptor: String,
}

impl ActionRecord {
    pub fn action_id(&self) -> &str {
        &self.action_id
    }
    pub fn task_id(&self) -> &TaskId {
        &self.task_id
    }
    pub fn authorizing_decision(&self) -> &AuthorizationDecision {
        &self.authorizing_decision
    }
    pub fn effect_descriptor(&self) -> &str {
        &self.effect_descriptor
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AuthorityError {
    #[error("denied verdicts terminate and are never enqueued")]
    DeniedVerdict,
    #[error("item `{0}` is already decided")]
    AlreadyDecided(ItemId),
    #[error("principal `{0}` is not cleared for this item")]
    UnauthorizedPrincipal(PrincipalId),
    #[error("a rationale is required")]
    EmptyRationale,
    #[error("item `{0}` is at the top escalation level")]
    MaxLevelReached(ItemId),
    #[error("unknown item `{0}`")]
    UnknownItem(ItemId),
    #[error("a reject decision cannot authorize an action")]
    RejectedDecision,
    #[error("decision on `{0}` has already authorized an action")]
    AlreadyAuthorized(ItemId),
}

#[derive(Debug, Default)]
struct QueueState {
    items: BTreeMap<ItemId, PendingItem>,
    next_item: u64,
    next_action: u64,
    authorized: BTreeSet<ItemId>,
}

impl QueueState {
    fn spawn(
        &mut self,
        task_id: TaskId,
        output: Option<AnalyticalOutput>,
        verdict: Option<ConstraintVerdict>,
        level: u8,
        now: Timestamp,
        escalated_from: Option<ItemId>,
    ) -> PendingItem {
        self.next_item += 1;
        let item = PendingItem {
            item_id: ItemId::new(format!("item-{:06}", self.next_item)),
            task_id,
            output,
            verdict,
            level,
            state: ItemState::Pending,
            created_at: now,
            escalated_from,
        };
        self.items.insert(item.item_id.clone(), item.clone());
        item
    }

    fn pending_mut(&mut self, id: &ItemId) -> Result<&mut PendingItem, AuthorityError> {
        let item = self.items.get_mut(id).ok_or_else(|| AuthorityError::UnknownItem(id.clone()))?;
        if item.state != ItemState::Pending {
            return Err(AuthorityError::AlreadyDecided(id.clone()));
        }
        Ok(item)
    }
}

/// The review queue. Every transition happens under one lock, so of two
/// concurrent decisions on an item exactly one wins.
#[derive(Debug)]
pub struct ReviewQueue {
    max_level: u8,
    state: Mutex<QueueState>,
}

impl Default for ReviewQueue {
    fn default() -> Self {
        ReviewQueue::new(DEFAULT_MAX_LEVEL)
    }
}

impl ReviewQueue {
    pub fn new(max_level: u8) -> Self {
        ReviewQueue { max_level: max_level.max(1), state: Mutex::new(QueueState::default()) }
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, QueueState> {
        self.state.lock().expect("review queue lock")
    }

    /// Queues a constraint-checked output. Red-team flags start the item at level 2.
    pub fn enqueue_for_review(
        &self,
        output: &AnalyticalOutput,
        verdict: &ConstraintVerdict,
        log: &AuditLog,
        now: Timestamp,
    ) -> Result<PendingItem, AuthorityError> {
        if verdict.outcome == Outcome::Denied {
            return Err(AuthorityError::DeniedVerdict);
        }
        let flagged = !verdict.red_team_flags.is_empty();
        let level = if flagged { 2.min(self.max_level) } else { 1 };
        let reason = match (flagged, verdict.outcome) {
            (true, _) => EnqueueReason::RedTeamFlag,
            (false, Outcome::ReviewRequired) => EnqueueReason::ReviewRequired,
            _ => EnqueueReason::Checkpoint,
        };
        let mut st = self.lock();
        let item = st.spawn(verdict.task_id.clone(), Some(output.clone()), Some(verdict.clone()), level, now, None);
        log.append(
            EventKind::Enqueue,
            Some(&item.task_id),
            &EnqueuePayload { item_id: item.item_id.clone(), level, reason, has_output: true },
        );
        Ok(item)
    }

    /// Queues a task whose routing walk was exhausted, for manual handling.
    pub fn enqueue_degraded(&self, task_id: &TaskId, log: &AuditLog, now: Timestamp) -> PendingItem {
        let mut st = self.lock();
        let item = st.spawn(task_id.clone(), None, None, 1, now, None);
        log.append(
            EventKind::Enqueue,
            Some(task_id),
            &EnqueuePayload { item_id: item.item_id.clone(), level: 1, reason: EnqueueReason::Degraded, has_output: false },
        );
        item
    }

    #[allow(clippy::too_many_arguments)]
    pub fn decide(
        &self,
        item_id: &ItemId,
        principal: &PrincipalId,
        decision: DecisionKind,
        rationale: &str,
        principals: &PrincipalRegistry,
        log: &AuditLog,
        now: Timestamp,
    ) -> Result<AuthorizationDecision, AuthorityError> {
        let mut st = self.lock();
        let level = st.items.get(item_id).ok_or_else(|| AuthorityError::UnknownItem(item_id.clone()))?.level;
        if rationale.trim().is_empty() {
            return Err(AuthorityError::EmptyRationale);
        }
        match principals.get(principal) {
            Some(p) if p.clearance >= level => {}
            _ => return Err(AuthorityError::UnauthorizedPrincipal(principal.clone())),
        }
        let item = st.pending_mut(item_id)?;
        item.state = if decision == DecisionKind::Reject { ItemState::Rejected } else { ItemState::Approved };
        let d = AuthorizationDecision {
            item_id: item_id.clone(),
            task_id: item.task_id.clone(),
            principal: principal.clone(),
            decision,
            rationale_text: rationale.to_owned(),
            decided_at: now,
        };
        log.append(
            EventKind::HumanDecision,
            Some(&d.task_id),
            &DecisionPayload {
                item_id: item_id.clone(),
                principal: principal.clone(),
                decision,
                rationale: rationale.to_owned(),
                level,
                decided_at: now,
            },
        );
        Ok(d)
    }

    /// Moves a pending item one level up, linking the new item to the old.
    pub fn escalate(
        &self,
        item_id: &ItemId,
        reason: &str,
        log: &AuditLog,
        now: Timestamp,
    ) -> Result<PendingItem, AuthorityError> {
        let mut st = self.lock();
        let item = st.pending_mut(item_id)?;
        if item.level >= self.max_level {
            return Err(AuthorityError::MaxLevelReached(item_id.clone()));
        }
        item.state = ItemState::Escalated;
        let (task, output, verdict, level) = (item.task_id.clone(), item.output.clone(), item.verdict.clone(), item.level);
        let next = st.spawn(task, output, verdict, level + 1, now, Some(item_id.clone()));
        log.append(
            EventKind::Escalation,
            Some(&next.task_id),
            &EscalationPayload {
                from_item: item_id.clone(),
                to_item: next.item_id.clone(),
                new_level: next.level,
                reason: reason.to_owned(),
                cause: EscalationCause::Manual,
            },
        );
        Ok(next)
    }

    /// Expires pending items older than `timeout` into a fresh item one level
    /// up (or at the top level again), so that no queue silently stalls.
    pub fn expire_stale(&self, now: Timestamp, timeout: u64, log: &AuditLog) -> Vec<PendingItem> {
        let mut st = self.lock();
        let stale: Vec<ItemId> = st
            .items
            .values()
            .filter(|i| i.state == ItemState::Pending && now.0.saturating_sub(i.created_at.0) > timeout)
            .map(|i| i.item_id.clone())
            .collect();
        let mut spawned = Vec::new();
        for id in stale {
            let item = st.items.get_mut(&id).expect("stale item exists");
            item.state = ItemState::Expired;
            let (task, output, verdict) = (item.task_id.clone(), item.output.clone(), item.verdict.clone());
            let level = (item.level + 1).min(self.max_level);
            let next = st.spawn(task, output, verdict, level, now, Some(id.clone()));
            log.append(
                EventKind::Escalation,
                Some(&next.task_id),
                &EscalationPayload {
                    from_item: id,
                    to_item: next.item_id.clone(),
                    new_level: level,
                    reason: "review timeout".into(),
                    cause: EscalationCause::Expired,
                },
            );
            spawned.push(next);
        }
        spawned
    }

    /// Converts an approving human decision into an action record.
    pub fn authorize_action(
        &self,
        decision: &AuthorizationDecision,
        effect_descriptor: &str,
        log: &AuditLog,
    ) -> Result<ActionRecord, AuthorityError> {
        if !decision.decision.authorizes() {
            return Err(AuthorityError::RejectedDecision);
        }
        let mut st = self.lock();
        if !st.authorized.insert(decision.item_id.clone()) {
            return Err(AuthorityError::AlreadyAuthorized(decision.item_id.clone()));
        }
        st.next_action += 1;
        let record = ActionRecord {
            action_id: format!("action-{:06}", st.next_action),
            task_id: decision.task_id.clone(),
            authorizing_decision: decision.clone(),
            effect_descriptor: effect_descriptor.to_owned(),
        };
        log.append(
            EventKind::Action,
            Some(&record.task_id),
            &ActionPayload {
                action_id: record.action_id.clone(),
                origin: ActionOrigin::HumanAuthorization,
                authorizing_item: Some(decision.item_id.clone()),
                principal: Some(decision.principal.clone()),
                decision: Some(decision.decision),
                effect_descriptor: effect_descriptor.to_owned(),
            },
        );
        Ok(record)
    }

    pub fn get(&self, id: &ItemId) -> Option<PendingItem> {
        self.lock().items.get(id).cloned()
    }

    /// Every item ever created for a task, oldest first.
    pub fn items_for_task(&self, task: &TaskId) -> Vec<PendingItem> {
        self.lock().items.values().filter(|i| &i.task_id == task).cloned().collect()
    }

    /// Pending items at or below `clearance`, optionally at exactly `level`.
    pub fn list_pending(&self, clearance: u8, level: Option<u8>) -> Vec<PendingItem> {
        self.lock()
            .items
            .values()
            .filter(|i| i.state == ItemState::Pending && i.level <= clearance && level.is_none_or(|l| i.level == l))
            .cloned()
            .collect()
    }
}
