//! Acceptance suite. Runs without the libtest harness so that each criterion
//! prints exactly one PASS/FAIL line; the process exits non-zero on any FAIL.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use sovgate::adapters::{AnalyticalOutput, OutputKind, PayloadDialect, ScoredOption};
use sovgate::audit::events::{ActionPayload, DecisionPayload, TerminalState};
use sovgate::audit::{all_traces, completeness_report, to_ndjson, EventKind, TraceField};
use sovgate::clock::Timestamp;
use sovgate::constraints::{ConstraintRule, Effect, Predicate};
use sovgate::digest::Digest;
use sovgate::orchestrator::DegradedMode;
use sovgate::threat_sim::{version_changes, unauthorized_actions, ThreatScenario};
use sovgate::{
    compare_architectures, evaluate, run_scenario, verify_ndjson, ArchitectureMode, AuditEvent, ChainVerdict,
    DomainTag, DomainTaxonomy, Outcome, ProvenanceRecord, RuleSet, ScenarioId, TaskEnvelope, Tier,
};

type Criterion = fn() -> Result<String, String>;

fn check(ok: bool, detail: String) -> Result<String, String> {
    if ok { Ok(detail) } else { Err(detail) }
}

fn sovereign(id: ScenarioId, seed: u64, count: usize) -> ThreatScenario {
    ThreatScenario::builtin(id, ArchitectureMode::SovereigntyCentric, seed, count)
}

/// Independent of the scorer: an action is authorized only by an earlier
/// approve/override decision on the item it names, by the same principal.
fn unauthorized_by_replay(events: &[AuditEvent]) -> usize {
    let mut authorized = BTreeMap::new();
    let mut bad = 0;
    for e in events {
        match e.kind {
            EventKind::HumanDecision => {
                let d: DecisionPayload = e.decode().unwrap();
                if d.decision.authorizes() {
                    authorized.insert(d.item_id, d.principal);
                }
            }
            EventKind::Action => {
                let a: ActionPayload = e.decode().unwrap();
                let ok = match (&a.authorizing_item, &a.principal) {
                    (Some(item), Some(p)) => authorized.get(item) == Some(p),
                    _ => false,
                };
                bad += usize::from(!ok);
            }
            _ => {}
        }
    }
    bad
}

fn non_self_execution() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut tasks, mut actions, mut bad) = (0, 0, 0);
    for round in 0..4 {
        for id in ScenarioId::THREATS {
            let mut s = sovereign(id, rng.random(), 500);
            for w in s.workload.domains.values_mut() {
                *w = rng.random_range(1..10);
            }
            let r = run_scenario(&s).map_err(|e| format!("round {round} {}: {e}", id.as_str()))?;
            tasks += r.summary.tasks;
            actions += r.summary.actions;
            bad += unauthorized_by_replay(&r.events) + unauthorized_actions(&r.events);
        }
    }
    let took = start.elapsed();
    check(
        tasks >= 10_000 && actions > 0 && bad == 0 && took <= Duration::from_secs(60),
        format!("{tasks} tasks, {actions} actions, {bad} unauthorized, {took:.2?}"),
    )
}

const ADAPTER_MASK: &str = "<adapter>";

fn mask(v: &mut Value, ids: &[&str]) {
    match v {
        Value::String(s) if ids.contains(&s.as_str()) => *s = ADAPTER_MASK.into(),
        Value::Array(xs) => xs.iter_mut().for_each(|x| mask(x, ids)),
        Value::Object(m) => {
            m.retain(|k, _| !k.ends_with("_at") && !k.ends_with("_time"));
            m.values_mut().for_each(|x| mask(x, ids));
        }
        _ => {}
    }
}

fn replaceability() -> Result<String, String> {
    let a = sovereign(ScenarioId::Neutral, 41, 1000);
    let mut b = a.clone();
    let spec = b.adapter.iter_mut().find(|x| x.adapter_id == "alpha").unwrap();
    spec.adapter_id = "gamma".into();
    spec.supplier_name = "Tallis Research".into();
    spec.dialect = match spec.dialect {
        PayloadDialect::Json => PayloadDialect::LineKv,
        PayloadDialect::LineKv => PayloadDialect::Json,
    };
    for route in b.routing.domain.values_mut() {
        for p in &mut route.preference {
            if p.as_str() == "alpha" {
                *p = "gamma".into();
            }
        }
    }
    b.primary_adapter = Some("gamma".into());
    let ta = all_traces(&run_scenario(&a).map_err(|e| e.to_string())?.events);
    let tb = all_traces(&run_scenario(&b).map_err(|e| e.to_string())?.events);
    let mut divergent = 0;
    for (x, y) in ta.iter().zip(&tb) {
        let (mut x, mut y) = (serde_json::to_value(x).unwrap(), serde_json::to_value(y).unwrap());
        mask(&mut x, &["alpha"]);
        mask(&mut y, &["gamma"]);
        divergent += usize::from(x != y);
    }
    let swapped = ta.iter().filter(|t| t.model_choice == TraceField::Populated("alpha".into())).count();
    check(
        ta.len() == 1000 && tb.len() == 1000 && swapped > 0 && divergent == 0,
        format!("{} traces, {swapped} served by the swapped adapter, {divergent} divergences", ta.len()),
    )
}

fn version_drift() -> Result<String, String> {
    let mut parts = Vec::new();
    let mut ok = true;
    for mode in ArchitectureMode::BOTH {
        let r = run_scenario(&ThreatScenario::builtin(ScenarioId::VersionDrift, mode, 7, 200)).map_err(|e| e.to_string())?;
        let v = version_changes(&r.events);
        ok &= v.changes > 0
            && match mode {
                ArchitectureMode::SovereigntyCentric => v.detected == v.changes && v.normalized == 0,
                ArchitectureMode::ModelCentric => v.detected == 0,
            };
        parts.push(format!("{}: {}/{} detected, {} normalized", mode.as_str(), v.detected, v.changes, v.normalized));
    }
    check(ok, parts.join("; "))
}

fn post_withdrawal_states(s: &ThreatScenario) -> Result<(Vec<TerminalState>, usize), String> {
    let r = run_scenario(s).map_err(|e| e.to_string())?;
    let traces = all_traces(&r.events);
    // Task ids are sequential from the workload order; alpha is invoked once
    // per task until the step it withdraws at.
    let states = traces.iter().skip(10).map(|t| t.terminal_state).collect();
    Ok((states, r.summary.unauthorized_actions + unauthorized_by_replay(&r.events)))
}

fn withdrawal() -> Result<String, String> {
    let two = sovereign(ScenarioId::Withdrawal, 7, 1000);
    let (states, bad) = post_withdrawal_states(&two)?;
    let terminal = states.iter().filter(|s| **s != TerminalState::Pending).count();
    let share = terminal as f64 / states.len() as f64;

    let mut one = two.clone();
    one.adapter.retain(|a| a.adapter_id == "alpha");
    for route in one.routing.domain.values_mut() {
        route.preference.retain(|p| p.as_str() == "alpha");
        route.degraded_mode = DegradedMode::FailClosed;
    }
    let (single, bad_single) = post_withdrawal_states(&one)?;
    let degraded = single.iter().filter(|s| **s == TerminalState::Degraded).count();
    let fail_open = single.iter().filter(|s| **s == TerminalState::ActionIssued).count();
    check(
        share >= 0.99 && bad == 0 && degraded == single.len() && fail_open == 0 && bad_single == 0,
        format!(
            "two adapters: {:.2}% terminal, {bad} unauthorized; single fail_closed: {degraded}/{} degraded, {fail_open} fail-open",
            share * 100.0,
            single.len()
        ),
    )
}

fn audit_integrity() -> Result<String, String> {
    let r = run_scenario(&sovereign(ScenarioId::Neutral, 99, 1400)).map_err(|e| e.to_string())?;
    if r.events.len() < 10_000 {
        return Err(format!("only {} events generated", r.events.len()));
    }
    let log = to_ndjson(&r.events[..10_000]).into_bytes();
    let t = Instant::now();
    let clean = verify_ndjson(&log);
    let single = t.elapsed();

    let mut rng = ChaCha8Rng::seed_from_u64(0xb17);
    let mut missed = 0;
    let mut slowest = Duration::ZERO;
    let total = Instant::now();
    for _ in 0..1000 {
        let mut bytes = log.clone();
        let pos = rng.random_range(0..bytes.len());
        bytes[pos] ^= 1 << rng.random_range(0..8);
        let line = bytes[..pos].iter().filter(|b| **b == b'\n').count() as u64;
        let t = Instant::now();
        let verdict = verify_ndjson(&bytes);
        slowest = slowest.max(t.elapsed());
        missed += usize::from(!matches!(verdict, ChainVerdict::BrokenAt(n) if n <= line));
    }
    check(
        clean == ChainVerdict::Valid && missed == 0 && single <= Duration::from_secs(5) && slowest <= Duration::from_secs(5),
        format!(
            "10000 events verify in {single:.2?}; 1000 bit flips, {missed} missed, slowest {slowest:.2?}, all {:.2?}",
            total.elapsed()
        ),
    )
}

fn trace_completeness() -> Result<String, String> {
    let mut approved = 0;
    let mut partial = 0;
    for id in ScenarioId::ALL {
        let r = run_scenario(&sovereign(id, 7, 200)).map_err(|e| e.to_string())?;
        for t in all_traces(&r.events).iter().filter(|t| t.terminal_state == TerminalState::ActionIssued) {
            approved += 1;
            partial += usize::from(!t.fully_populated());
        }
    }
    let neutral = run_scenario(&sovereign(ScenarioId::Neutral, 7, 200)).map_err(|e| e.to_string())?;
    let ratio = completeness_report(&neutral.events).completeness_ratio;

    let asym = run_scenario(&sovereign(ScenarioId::AuditAsymmetry, 7, 200)).map_err(|e| e.to_string())?;
    let traces = all_traces(&asym.events);
    let bare: Vec<_> = traces.iter().filter(|t| t.rationale == TraceField::Missing).collect();
    let authorized = bare.iter().filter(|t| t.terminal_state == TerminalState::ActionIssued).count();
    let diverted = bare.iter().filter(|t| matches!(t.constraint_outcome, Some(Outcome::ReviewRequired | Outcome::Denied))).count();
    check(
        approved > 0 && partial == 0 && ratio == 1.0 && !bare.is_empty() && authorized == 0 && diverted == bare.len(),
        format!(
            "{approved} approved traces, {partial} partial; neutral ratio {ratio}; audit_asymmetry: {} rationale-missing outputs, {authorized} authorized, {diverted} diverted",
            bare.len()
        ),
    )
}

const DOMAINS: [&str; 4] = ["summarization", "anomaly_detection", "option_generation", "planning_support"];

fn arb_rule(id: String) -> impl Strategy<Value = ConstraintRule> {
    let set = |n| 1..n;
    let domains = prop::option::of(prop::collection::btree_set(prop::sample::select(DOMAINS.to_vec()).prop_map(DomainTag::new), set(3)));
    let tiers = prop::option::of(prop::collection::btree_set(prop::sample::select(Tier::ALL.to_vec()), set(3)));
    let kinds = prop::option::of(prop::collection::btree_set(prop::sample::select(OutputKind::ALL.to_vec()), set(3)));
    let min_tier = prop::option::of(prop::sample::select(Tier::ALL.to_vec()));
    (domains, tiers, kinds, prop::sample::select(Effect::ALL.to_vec()), min_tier, any::<bool>()).prop_map(
        move |(domains, tiers, kinds, effect, min_tier, rationale_required)| ConstraintRule {
            rule_id: id.clone(),
            applies_to: Predicate { domains, tiers, kinds },
            effect,
            min_tier,
            rationale_required,
        },
    )
}

fn arb_case() -> impl Strategy<Value = (Vec<ConstraintRule>, ConstraintRule, usize, TaskEnvelope, AnalyticalOutput)> {
    let rules = (0usize..8).prop_flat_map(|n| (0..n).map(|i| arb_rule(format!("r{i}"))).collect::<Vec<_>>());
    let env = (prop::sample::select(DOMAINS.to_vec()), prop::sample::select(Tier::ALL.to_vec())).prop_map(|(d, tier)| {
        TaskEnvelope {
            task_id: "t".into(),
            domain_tag: DomainTag::new(d),
            payload_digest: Digest::of(b"t"),
            provenance: ProvenanceRecord {
                source_id: "src".into(),
                resolved_tier: tier,
                uncertainty_flags: BTreeSet::new(),
                ingest_time: Timestamp(0),
            },
            requested_by: "ops".into(),
        }
    });
    let out = (prop::sample::select(OutputKind::ALL.to_vec()), any::<bool>(), 0.0..=1.0f64).prop_map(|(kind, why, conf)| {
        AnalyticalOutput {
            task_id: "t".into(),
            adapter_id: "alpha".into(),
            version_used: "1.0".into(),
            kind,
            options: vec![ScoredOption { option_id: "o1".into(), description_digest: Digest::of(b"o1"), score: conf }],
            confidence: conf,
            rationale_digest: why.then(|| Digest::of(b"why")),
            produced_at: Timestamp(0),
        }
    });
    (rules, arb_rule("added".into()), any::<usize>(), env, out)
}

fn severity(o: Outcome) -> u8 {
    match o {
        Outcome::Admissible => 0,
        Outcome::ReviewRequired => 1,
        Outcome::Denied => 2,
    }
}

fn constraint_monotonicity() -> Result<String, String> {
    let taxonomy = DomainTaxonomy::default();
    let config = Config { cases: 10_000, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(Default::default()));
    let tightened = std::cell::Cell::new(0usize);
    let result = runner.run(&arb_case(), |(rules, extra, at, env, out)| {
        let before = evaluate(&out, &env, &RuleSet::from_rules(rules.clone(), &taxonomy).unwrap());
        let mut more = rules;
        more.insert(at % (more.len() + 1), extra);
        let after = evaluate(&out, &env, &RuleSet::from_rules(more, &taxonomy).unwrap());
        tightened.set(tightened.get() + usize::from(severity(after.outcome) > severity(before.outcome)));
        if severity(after.outcome) < severity(before.outcome) || !after.red_team_flags.is_superset(&before.red_team_flags) {
            return Err(TestCaseError::fail(format!("{:?} -> {:?}", before.outcome, after.outcome)));
        }
        Ok(())
    });
    match result {
        Ok(()) => Ok(format!("10000 cases, 0 counterexamples, {} tightened", tightened.get())),
        Err(e) => Err(e.to_string()),
    }
}

fn comparison_report() -> Result<String, String> {
    let suite = ThreatScenario::builtin_suite(7, 200);
    let t = Instant::now();
    let a = compare_architectures(&suite).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    let b = compare_architectures(&suite).map_err(|e| e.to_string())?;
    let same = a.render() == b.render() && a.to_json().to_string() == b.to_json().to_string();
    check(
        a.rows.len() == 8 && a.weakly_dominates() && same && took <= Duration::from_secs(120),
        format!("{} rows, dominates: {}, repeat identical: {same}, {took:.2?}", a.rows.len(), a.weakly_dominates()),
    )
}

fn determinism() -> Result<String, String> {
    let mut differing = Vec::new();
    let mut runs = 0;
    for id in ScenarioId::ALL {
        for mode in ArchitectureMode::BOTH {
            for seed in [7, 1234] {
                let s = ThreatScenario::builtin(id, mode, seed, 150);
                let x = run_scenario(&s).map_err(|e| e.to_string())?.ndjson();
                let y = run_scenario(&s).map_err(|e| e.to_string())?.ndjson();
                runs += 1;
                if x != y {
                    differing.push(format!("{}/{}/{seed}", id.as_str(), mode.as_str()));
                }
            }
        }
    }
    let a = run_scenario(&sovereign(ScenarioId::Neutral, 1, 150)).map_err(|e| e.to_string())?.ndjson();
    let b = run_scenario(&sovereign(ScenarioId::Neutral, 2, 150)).map_err(|e| e.to_string())?.ndjson();
    check(
        differing.is_empty() && a != b,
        format!("{runs} (scenario, mode, seed) pairs replayed, {} differ {differing:?}; distinct seeds give distinct logs: {}", differing.len(), a != b),
    )
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("non_self_execution", non_self_execution),
        ("replaceability", replaceability),
        ("version_drift", version_drift),
        ("withdrawal_resilience", withdrawal),
        ("audit_integrity", audit_integrity),
        ("trace_completeness", trace_completeness),
        ("constraint_monotonicity", constraint_monotonicity),
        ("comparison_report", comparison_report),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
