use super::*;

#[test]
fn builtin_scenarios_round_trip_through_toml() {
    for s in ThreatScenario::builtin_suite(DEFAULT_SEED, DEFAULT_COUNT) {
        let text = s.to_toml();
        assert_eq!(ThreatScenario::parse(&text).unwrap(), s, "{}", s.file_name());
    }
}

#[test]
fn primary_defaults_to_first_adapter() {
    let mut s = ThreatScenario::builtin(ScenarioId::Neutral, ArchitectureMode::ModelCentric, 1, 10);
    s.primary_adapter = None;
    assert_eq!(s.primary().unwrap().adapter_id, "alpha");
}

#[test]
fn scenario_ids_parse() {
    for id in ScenarioId::ALL {
        assert_eq!(id.as_str().parse::<ScenarioId>().unwrap(), id);
    }
    assert!("drift".parse::<ScenarioId>().is_err());
}

use super::run::generate_workload;
use crate::audit::events::TerminalState;
use crate::audit::{all_traces, completeness_report, TraceField};
use crate::types::DomainTag;

fn run(id: ScenarioId, mode: ArchitectureMode, count: usize) -> ScenarioReport {
    run_scenario(&ThreatScenario::builtin(id, mode, DEFAULT_SEED, count)).unwrap()
}

#[test]
fn withdrawal_falls_back_after_step_ten() {
    let r = run(ScenarioId::Withdrawal, ArchitectureMode::SovereigntyCentric, 120);
    let traces = all_traces(&r.events);
    assert_eq!(traces.len(), 120);
    // Alpha serves one invocation per task, so task index equals its step.
    for t in &traces[10..] {
        assert_eq!(t.model_choice, TraceField::Populated("beta".into()), "{}", t.task_id);
    }
    assert_eq!(r.summary.unauthorized_actions, 0);
    assert_eq!(r.summary.routed, 120);
}

#[test]
fn model_centric_withdrawal_fails_every_later_task() {
    let n = 120;
    let r = run(ScenarioId::Withdrawal, ArchitectureMode::ModelCentric, n);
    assert_eq!(r.summary.terminal.get("degraded"), Some(&(n - 10)));
    assert_eq!(r.summary.actions, 10);
}

#[test]
fn neutral_sovereign_run_scores_full_marks() {
    let r = run(ScenarioId::Neutral, ArchitectureMode::SovereigntyCentric, 120);
    for (axis, v) in r.scorecard.axes() {
        assert_eq!(v, 1.0, "{axis}");
    }
    let mc = run(ScenarioId::Neutral, ArchitectureMode::ModelCentric, 120);
    assert_eq!(mc.scorecard.action_sovereignty, 0.0);
}

#[test]
fn model_centric_policy_injection_cedes_boundaries() {
    let s = ThreatScenario::builtin(ScenarioId::PolicyInjection, ArchitectureMode::ModelCentric, DEFAULT_SEED, 160);
    let r = run_scenario(&s).unwrap();
    assert!(r.scorecard.policy_sovereignty < 1.0);
    // Oracle: the script refuses exactly the workload tasks in its two domains.
    let refused: Vec<DomainTag> = ["planning_support", "option_generation"].map(DomainTag::new).to_vec();
    let expected = generate_workload(&s).unwrap().iter().filter(|t| refused.iter().any(|d| t.domain_tag.as_deref() == Some(d.as_str()))).count();
    assert_eq!(r.summary.terminal.get("degraded"), Some(&expected));
    assert_eq!(r.scorecard.policy_sovereignty, 0.0);
}

#[test]
fn broken_chain_cannot_be_scored() {
    let mut events = run(ScenarioId::Neutral, ArchitectureMode::SovereigntyCentric, 20).events;
    events[5].payload = serde_json::json!({"tampered": true});
    assert!(matches!(score_sovereignty(&events), Err(ScoreError::BrokenChain(_))));
}

#[test]
fn rationale_gaps_surface_when_the_rule_is_off() {
    let mut s = ThreatScenario::builtin(ScenarioId::AuditAsymmetry, ArchitectureMode::SovereigntyCentric, DEFAULT_SEED, 120);
    s.ruleset = s.ruleset.replace("rationale_required true", "rationale_required false");
    let r = run_scenario(&s).unwrap();
    let report = completeness_report(&r.events);
    assert!(report.completeness_ratio < 1.0);
    // Oracle: alpha omits its rationale from step count/4 onward, and alpha's
    // step is the task index.
    let traces = all_traces(&r.events);
    let omitted = traces
        .iter()
        .enumerate()
        .filter(|(i, t)| *i >= 30 && t.model_choice == TraceField::Populated("alpha".into()))
        .count();
    assert!(omitted > 0);
    assert_eq!(report.missing_field_histogram.get("rationale"), Some(&omitted));
    // With the rule off, some of those outputs do get authorized.
    assert!(traces.iter().any(|t| t.rationale == TraceField::Missing && t.terminal_state == TerminalState::ActionIssued));
}

#[test]
fn alliance_probe_agrees_behind_the_same_policy() {
    let s = ThreatScenario::builtin(ScenarioId::PolicyInjection, ArchitectureMode::SovereigntyCentric, DEFAULT_SEED, 120);
    assert_eq!(alliance_probe(&s).unwrap(), 1.0);
    assert!(alliance_probe(&s.with_mode(ArchitectureMode::ModelCentric)).unwrap() < 1.0);
}

#[test]
fn incomplete_suites_are_refused() {
    assert!(matches!(compare_architectures(&[]), Err(SuiteError::IncompleteSuite(m)) if m.len() == 10));
    let suite: Vec<_> = ThreatScenario::builtin_suite(DEFAULT_SEED, 20)
        .into_iter()
        .filter(|s| !(s.scenario_id == ScenarioId::VersionDrift && s.mode == ArchitectureMode::ModelCentric))
        .collect();
    match compare_architectures(&suite) {
        Err(SuiteError::IncompleteSuite(m)) => assert_eq!(m, ["version_drift/model_centric"]),
        other => panic!("{other:?}"),
    }
}
