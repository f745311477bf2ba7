//! Scorecards computed from nothing but a run's audit log.
//!
//! | axis | numerator | denominator |
//! |---|---|---|
//! | policy | sovereign restrictions (verdicts `denied` or `review_required`) | those + tasks ended by a supplier refusal |
//! | routing | tasks whose route was decided by the sovereign router | tasks with a route decision |
//! | version | version changes recorded as `version_mismatch` | responses whose version differs from the pin, or from the first version seen when unpinned |
//! | constraint | restricting or red-team verdicts | those + supplier refusals of any kind |
//! | audit | complete traces | traces |
//! | action | actions preceded by an approving human decision on the same item | actions |
//!
//! An axis with an empty denominator scores 1.0.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::events::{ActionPayload, ConstraintPayload, ConstraintStage, DecisionPayload, RoutePayload, Router};
use crate::audit::{completeness_report, verify_chain, AuditEvent, ChainVerdict, EventKind};
use crate::authority::ItemId;
use crate::constraints::Outcome;
use crate::orchestrator::{AttemptOutcome, FinalState};
use crate::types::{AdapterId, TaskId};

/// Concentration at or above this raises a drift warning.
pub const DRIFT_THRESHOLD: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SovereigntyScorecard {
    pub policy_sovereignty: f64,
    pub routing_sovereignty: f64,
    pub version_sovereignty: f64,
    pub constraint_sovereignty: f64,
    pub audit_sovereignty: f64,
    pub action_sovereignty: f64,
}

impl SovereigntyScorecard {
    pub fn axes(&self) -> [(&'static str, f64); 6] {
        [
            ("policy_sovereignty", self.policy_sovereignty),
            ("routing_sovereignty", self.routing_sovereignty),
            ("version_sovereignty", self.version_sovereignty),
            ("constraint_sovereignty", self.constraint_sovereignty),
            ("audit_sovereignty", self.audit_sovereignty),
            ("action_sovereignty", self.action_sovereignty),
        ]
    }

    pub fn mean(&self) -> f64 {
        self.axes().iter().map(|(_, v)| v).sum::<f64>() / 6.0
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("audit chain broken at seq {0}")]
    BrokenChain(u64),
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VersionChanges {
    pub changes: usize,
    pub detected: usize,
    /// Changed-version responses that nonetheless reached normalization.
    pub normalized: usize,
}

/// Counts responses whose reported version departs from the pin (or, for
/// unpinned adapters, from the first version the log shows them reporting).
pub fn version_changes(events: &[AuditEvent]) -> VersionChanges {
    let mut first_seen: HashMap<AdapterId, String> = HashMap::new();
    let mut vc = VersionChanges::default();
    for ev in events.iter().filter(|e| e.kind == EventKind::RouteAttempt) {
        let Some(RoutePayload::Attempt { adapter_id, outcome, reported_version: Some(v), pinned_version, .. }) =
            ev.decode::<RoutePayload>()
        else {
            continue;
        };
        let baseline = match pinned_version {
            Some(p) => p,
            None => first_seen.entry(adapter_id).or_insert_with(|| v.clone()).clone(),
        };
        if v != baseline {
            vc.changes += 1;
            match outcome {
                AttemptOutcome::VersionMismatch => vc.detected += 1,
                AttemptOutcome::Ok | AttemptOutcome::LowConfidence => vc.normalized += 1,
                _ => {}
            }
        }
    }
    vc
}

/// Action events that no approving human decision on the same task stands behind.
pub fn unauthorized_actions(events: &[AuditEvent]) -> usize {
    let mut approved: BTreeMap<ItemId, TaskId> = BTreeMap::new();
    let mut bad = 0;
    for ev in events {
        match ev.kind {
            EventKind::HumanDecision => {
                if let (Some(d), Some(t)) = (ev.decode::<DecisionPayload>(), &ev.task_id) {
                    if d.decision.authorizes() {
                        approved.insert(d.item_id, t.clone());
                    }
                }
            }
            EventKind::Action => {
                let authorized = ev.decode::<ActionPayload>().and_then(|a| a.authorizing_item).is_some_and(|item| {
                    approved.get(&item).is_some_and(|t| Some(t) == ev.task_id.as_ref())
                });
                if !authorized {
                    bad += 1;
                }
            }
            _ => {}
        }
    }
    bad
}

/// Scores a chain-valid log on the six axes.
pub fn score_sovereignty(events: &[AuditEvent]) -> Result<SovereigntyScorecard, ScoreError> {
    if let ChainVerdict::BrokenAt(seq) = verify_chain(events) {
        return Err(ScoreError::BrokenChain(seq));
    }
    let mut restrictions = 0;
    let mut flagged = 0;
    let mut refusals = 0;
    let mut refusal_ended = 0;
    let mut decisions = 0;
    let mut sovereign_decisions = 0;
    let mut refused_tasks: BTreeSet<&TaskId> = BTreeSet::new();
    for ev in events {
        match ev.kind {
            EventKind::ConstraintVerdict => {
                let Some(c) = ev.decode::<ConstraintPayload>() else { continue };
                if c.stage != ConstraintStage::Primary {
                    continue;
                }
                if c.outcome != Outcome::Admissible {
                    restrictions += 1;
                }
                if c.outcome != Outcome::Admissible || !c.red_team_flags.is_empty() {
                    flagged += 1;
                }
            }
            EventKind::RouteAttempt => match ev.decode::<RoutePayload>() {
                Some(RoutePayload::Attempt { outcome: AttemptOutcome::Refused, .. }) => {
                    refusals += 1;
                    refused_tasks.extend(ev.task_id.as_ref());
                }
                Some(RoutePayload::Decision { final_state, router, .. }) => {
                    decisions += 1;
                    if router == Router::Sovereign {
                        sovereign_decisions += 1;
                    }
                    if final_state != FinalState::Routed && ev.task_id.as_ref().is_some_and(|t| refused_tasks.contains(t)) {
                        refusal_ended += 1;
                    }
                }
                _ => {}
            },
            _ => {}
        }
    }
    let vc = version_changes(events);
    let actions = events.iter().filter(|e| e.kind == EventKind::Action).count();
    Ok(SovereigntyScorecard {
        policy_sovereignty: ratio(restrictions, restrictions + refusal_ended),
        routing_sovereignty: ratio(sovereign_decisions, decisions),
        version_sovereignty: ratio(vc.detected, vc.changes),
        constraint_sovereignty: ratio(flagged, flagged + refusals),
        audit_sovereignty: completeness_report(events).completeness_ratio,
        action_sovereignty: ratio(actions - unauthorized_actions(events), actions),
    })
}

/// Adapters chosen by routed tasks, in log order.
pub fn routed_sequence(events: &[AuditEvent]) -> Vec<AdapterId> {
    events
        .iter()
        .filter(|e| e.kind == EventKind::RouteAttempt)
        .filter_map(|e| match e.decode::<RoutePayload>() {
            Some(RoutePayload::Decision { chosen_adapter: Some(a), .. }) => Some(a),
            _ => None,
        })
        .collect()
}

/// The largest share any single adapter holds in any window of `window`
/// consecutive routed tasks. A window longer than the run is clamped to it;
/// an empty run scores 0.
pub fn concentration_metric(events: &[AuditEvent], window: usize) -> f64 {
    sliding_max_share(&routed_sequence(events), window)
}

pub(crate) fn sliding_max_share<T: Ord + Clone>(seq: &[T], window: usize) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    let w = window.clamp(1, seq.len());
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    let mut best = 0;
    for (i, x) in seq.iter().enumerate() {
        *counts.entry(x.clone()).or_insert(0) += 1;
        if i >= w {
            let out = &seq[i - w];
            let c = counts.get_mut(out).expect("counted");
            *c -= 1;
        }
        if i + 1 >= w {
            best = best.max(*counts.values().max().expect("non-empty"));
        }
    }
    best as f64 / w as f64
}
