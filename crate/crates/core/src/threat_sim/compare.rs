//! The architecture comparison: eight dimensions, each a paired metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::run::{run_scenario, ScenarioReport};
use super::{ArchitectureMode, ScenarioError, ScenarioId, ThreatScenario};
use crate::adapters::Directive;
use crate::adapters::PayloadDialect;
use crate::adapters::SupplierBehaviorScript;
use crate::audit::events::{ConstraintPayload, ConstraintStage, RoutePayload};
use crate::audit::{task_ids, AuditEvent, EventKind};
use crate::orchestrator::{AttemptOutcome, FinalState};
use crate::types::{DomainTag, DomainTaxonomy, TaskId};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SuiteError {
    #[error("incomplete suite, missing: {}", .0.join(", "))]
    IncompleteSuite(Vec<String>),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub dimension: String,
    pub metric: String,
    pub definition: String,
    pub model_centric: f64,
    pub sovereignty_centric: f64,
}

impl ComparisonRow {
    pub fn sovereign_weakly_dominates(&self) -> bool {
        self.sovereignty_centric >= self.model_centric - 1e-12
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunLine {
    pub scenario_id: ScenarioId,
    pub mode: ArchitectureMode,
    pub scorecard: super::SovereigntyScorecard,
    pub summary: super::RunSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<RunLine>,
}

impl ComparisonReport {
    pub fn weakly_dominates(&self) -> bool {
        self.rows.iter().all(ComparisonRow::sovereign_weakly_dominates)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// A plain-text grid with one line per dimension.
    pub fn render(&self) -> String {
        let w = self.rows.iter().map(|r| r.dimension.len()).max().unwrap_or(9).max(9);
        let m = self.rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w$}  {:<m$}  {:>13}  {:>19}", "dimension", "metric", "model_centric", "sovereignty_centric");
        let _ = writeln!(out, "{}  {}  {}  {}", "-".repeat(w), "-".repeat(m), "-".repeat(13), "-".repeat(19));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<w$}  {:<m$}  {:>13.4}  {:>19.4}",
                r.dimension, r.metric, r.model_centric, r.sovereignty_centric
            );
        }
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}: {}", r.metric, r.definition);
        }
        let warnings: Vec<_> = self.runs.iter().filter(|r| r.summary.drift_warning).collect();
        if !warnings.is_empty() {
            out.push('\n');
            for r in warnings {
                let _ = writeln!(
                    out,
                    "drift warning: {} {} routing concentration {:.4}",
                    r.scenario_id, r.mode, r.summary.concentration
                );
            }
        }
        out
    }
}

/// Per task, what set the operational boundary: a sovereign verdict (with
/// the rules it rests on), a supplier refusal, or nothing at all.
fn boundary_sequence(events: &[AuditEvent]) -> Vec<(TaskId, String)> {
    let mut verdict: BTreeMap<&TaskId, String> = BTreeMap::new();
    let mut refused: BTreeMap<&TaskId, bool> = BTreeMap::new();
    let mut routed: BTreeMap<&TaskId, bool> = BTreeMap::new();
    for ev in events {
        let Some(t) = &ev.task_id else { continue };
        match ev.kind {
            EventKind::ConstraintVerdict => {
                if let Some(c) = ev.decode::<ConstraintPayload>() {
                    if c.stage == ConstraintStage::Primary {
                        verdict.insert(t, format!("{}:{}", c.outcome.as_str(), c.triggered_rules.join(",")));
                    }
                }
            }
            EventKind::RouteAttempt => match ev.decode::<RoutePayload>() {
                Some(RoutePayload::Attempt { outcome: AttemptOutcome::Refused, .. }) => {
                    refused.insert(t, true);
                }
                Some(RoutePayload::Decision { final_state, .. }) => {
                    routed.insert(t, final_state == FinalState::Routed);
                }
                _ => {}
            },
            _ => {}
        }
    }
    task_ids(events)
        .into_iter()
        .map(|t| {
            let label = match (verdict.get(&t), routed.get(&t), refused.get(&t)) {
                (Some(v), _, _) => v.clone(),
                (None, Some(false), Some(true)) => "supplier_refusal".to_owned(),
                (None, Some(false), _) => "degraded".to_owned(),
                (None, Some(true), _) => "unconstrained".to_owned(),
                (None, None, _) => "not_routed".to_owned(),
            };
            (t, label)
        })
        .collect()
}

/// The same deployment rebuilt on a disjoint set of suppliers whose own
/// usage policies differ: each refused domain is rotated one step through
/// the taxonomy.
fn partner_variant(s: &ThreatScenario) -> ThreatScenario {
    let taxonomy: Vec<DomainTag> = DomainTaxonomy::default().iter().cloned().collect();
    let rotate = |d: &DomainTag| {
        let i = taxonomy.iter().position(|t| t == d).unwrap_or(0);
        taxonomy[(i + 1) % taxonomy.len()].clone()
    };
    let mut b = s.clone();
    let renamed: BTreeMap<String, String> =
        s.adapter.iter().enumerate().map(|(i, a)| (a.adapter_id.clone(), format!("partner-{}", i + 1))).collect();
    for a in &mut b.adapter {
        a.adapter_id = renamed[&a.adapter_id].clone();
        a.supplier_name = format!("Partner {}", a.supplier_name);
        a.model_seed = a.model_seed.wrapping_add(1000);
        a.dialect = match a.dialect {
            PayloadDialect::Json => PayloadDialect::LineKv,
            PayloadDialect::LineKv => PayloadDialect::Json,
        };
        let directives = a
            .script
            .directives()
            .iter()
            .map(|d| match d {
                Directive::InjectPolicy { from_step, domains } => {
                    Directive::InjectPolicy { from_step: *from_step, domains: domains.iter().map(rotate).collect() }
                }
                other => other.clone(),
            })
            .collect();
        a.script = SupplierBehaviorScript::new(directives);
    }
    b.primary_adapter = s.primary_adapter.as_ref().map(|p| renamed.get(p).cloned().unwrap_or_else(|| p.clone()));
    for r in b.routing.domain.values_mut() {
        for id in r.preference.iter_mut().chain(r.internal_fallback.iter_mut()) {
            if let Some(n) = renamed.get(id.as_str()) {
                *id = n.as_str().into();
            }
        }
    }
    b
}

/// Fraction of tasks whose boundary decision agrees between the scenario's
/// supplier set and a disjoint partner set behind the same policy.
pub fn alliance_probe(s: &ThreatScenario) -> Result<f64, ScenarioError> {
    let a = run_scenario(s)?;
    let b = run_scenario(&partner_variant(s))?;
    let (sa, sb) = (boundary_sequence(&a.events), boundary_sequence(&b.events));
    if sa.is_empty() && sb.is_empty() {
        return Ok(1.0);
    }
    let n = sa.len().max(sb.len());
    let agree = sa.iter().zip(&sb).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / n as f64)
}

fn continuity(r: &ScenarioReport) -> f64 {
    if r.summary.tasks == 0 {
        1.0
    } else {
        r.summary.routed as f64 / r.summary.tasks as f64
    }
}

/// Runs every scenario of the suite and fills the eight comparison rows.
/// The suite must hold each of the five threat scenarios in both modes.
pub fn compare_architectures(suite: &[ThreatScenario]) -> Result<ComparisonReport, SuiteError> {
    let mut by_key: BTreeMap<(ScenarioId, ArchitectureMode), &ThreatScenario> = BTreeMap::new();
    for s in suite {
        by_key.entry((s.scenario_id, s.mode)).or_insert(s);
    }
    let missing: Vec<String> = ScenarioId::THREATS
        .iter()
        .flat_map(|id| ArchitectureMode::BOTH.map(|m| (*id, m)))
        .filter(|k| !by_key.contains_key(k))
        .map(|(id, m)| format!("{id}/{m}"))
        .collect();
    if !missing.is_empty() {
        return Err(SuiteError::IncompleteSuite(missing));
    }

    let mut reports: BTreeMap<(ScenarioId, ArchitectureMode), ScenarioReport> = BTreeMap::new();
    for (k, s) in &by_key {
        reports.insert(*k, run_scenario(s)?);
    }
    let get = |id, m| &reports[&(id, m)];
    let threat_runs = |m| ScenarioId::THREATS.iter().map(move |id| get(*id, m)).collect::<Vec<_>>();
    let pair = |f: &dyn Fn(ArchitectureMode) -> f64| {
        (f(ArchitectureMode::ModelCentric), f(ArchitectureMode::SovereigntyCentric))
    };

    let mut rows = Vec::with_capacity(8);
    let mut row = |dimension: &str, metric: &str, definition: &str, (mc, sc): (f64, f64)| {
        rows.push(ComparisonRow {
            dimension: dimension.into(),
            metric: metric.into(),
            definition: definition.into(),
            model_centric: mc,
            sovereignty_centric: sc,
        })
    };
    row(
        "operational boundary source",
        "policy_sovereignty",
        "share of restriction decisions made by the sovereign ruleset rather than supplier refusals (policy_injection)",
        pair(&|m| get(ScenarioId::PolicyInjection, m).scorecard.policy_sovereignty),
    );
    row(
        "model substitution",
        "substitutability",
        "1 - peak single-adapter share of routed tasks over sliding quarter-run windows (normative_drift)",
        pair(&|m| 1.0 - get(ScenarioId::NormativeDrift, m).summary.concentration),
    );
    row(
        "vendor withdrawal failure mode",
        "continuity",
        "share of tasks that still received a vetted analytical output (withdrawal)",
        pair(&|m| continuity(get(ScenarioId::Withdrawal, m))),
    );
    row(
        "version governance",
        "version_sovereignty",
        "share of changed supplier version strings detected and gated (version_drift)",
        pair(&|m| get(ScenarioId::VersionDrift, m).scorecard.version_sovereignty),
    );
    row(
        "auditability",
        "audit_sovereignty",
        "mean trace completeness ratio over the five threat scenarios",
        pair(&|m| threat_runs(m).iter().map(|r| r.scorecard.audit_sovereignty).sum::<f64>() / 5.0),
    );
    row(
        "human authority",
        "action_sovereignty",
        "minimum over the five threat scenarios of the share of actions preceded by a human decision",
        pair(&|m| threat_runs(m).iter().map(|r| r.scorecard.action_sovereignty).fold(1.0, f64::min)),
    );
    let probe_mc = alliance_probe(by_key[&(ScenarioId::PolicyInjection, ArchitectureMode::ModelCentric)])?;
    let probe_sc = alliance_probe(by_key[&(ScenarioId::PolicyInjection, ArchitectureMode::SovereigntyCentric)])?;
    row(
        "alliance interoperability",
        "boundary_agreement",
        "share of tasks given the same boundary decision by a disjoint partner supplier set behind the same policy (policy_injection)",
        (probe_mc, probe_sc),
    );
    row(
        "strategic sovereignty",
        "mean_axis_score",
        "mean of the six scorecard axes over the five threat scenarios",
        pair(&|m| threat_runs(m).iter().map(|r| r.scorecard.mean()).sum::<f64>() / 5.0),
    );

    let runs = reports
        .iter()
        .map(|((id, m), r)| RunLine { scenario_id: *id, mode: *m, scorecard: r.scorecard, summary: r.summary.clone() })
        .collect();
    Ok(ComparisonReport { rows, runs })
}
