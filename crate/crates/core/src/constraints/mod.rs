//! Layer 4: state-owned admissibility rules.
//!
//! A rule matches when every condition it states holds for the task's
//! domain, its resolved source tier and the output kind. Matching rules
//! aggregate into a verdict on the restriction lattice
//! `admissible < review_required < denied`: deny dominates, review comes
//! next, and a matching `rationale_required` rule asks for review whenever
//! the output carries no rationale digest. Nothing a supplier controls is
//! an input to [`evaluate`].

mod grammar;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AnalyticalOutput, OutputKind};
use crate::ingest::TaskEnvelope;
use crate::types::{DomainTag, DomainTaxonomy, TaskId, Tier};

pub use grammar::serialize_ruleset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Admit,
    Deny,
    RequireReview,
    RedTeamFlag,
}

impl Effect {
    pub const ALL: [Effect; 4] = [Effect::Admit, Effect::Deny, Effect::RequireReview, Effect::RedTeamFlag];

    pub fn as_str(self) -> &'static str {
        match self {
            Effect::Admit => "admit",
            Effect::Deny => "deny",
            Effect::RequireReview => "require_review",
            Effect::RedTeamFlag => "red_team_flag",
        }
    }
}

/// A conjunction of optional conditions; an absent condition always holds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub domains: Option<BTreeSet<DomainTag>>,
    pub tiers: Option<BTreeSet<Tier>>,
    pub kinds: Option<BTreeSet<OutputKind>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRule {
    pub rule_id: String,
    pub applies_to: Predicate,
    pub effect: Effect,
    /// When set, the rule only matches sources less reliable than this tier.
    pub min_tier: Option<Tier>,
    pub rationale_required: bool,
}

impl ConstraintRule {
    pub fn new(rule_id: &str, effect: Effect) -> Self {
        ConstraintRule {
            rule_id: rule_id.to_owned(),
            applies_to: Predicate::default(),
            effect,
            min_tier: None,
            rationale_required: false,
        }
    }

    pub fn matches(&self, domain: &DomainTag, tier: Tier, kind: OutputKind) -> bool {
        let p = &self.applies_to;
        p.domains.as_ref().is_none_or(|s| s.contains(domain))
            && p.tiers.as_ref().is_none_or(|s| s.contains(&tier))
            && p.kinds.as_ref().is_none_or(|s| s.contains(&kind))
            && self.min_tier.is_none_or(|min| tier < min)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    rules: Vec<ConstraintRule>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed policy at line {line}: {message}")]
pub struct MalformedPolicy {
    pub line: usize,
    pub message: String,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a ruleset from rules already known to be valid against `taxonomy`.
    pub fn from_rules(rules: Vec<ConstraintRule>, taxonomy: &DomainTaxonomy) -> Result<Self, MalformedPolicy> {
        let mut rs = RuleSet::new();
        for r in rules {
            rs.push(r, taxonomy, 0)?;
        }
        Ok(rs)
    }

    pub(crate) fn push(&mut self, rule: ConstraintRule, taxonomy: &DomainTaxonomy, line: usize) -> Result<(), MalformedPolicy> {
        let err = |message: String| MalformedPolicy { line, message };
        if self.rules.iter().any(|r| r.rule_id == rule.rule_id) {
            return Err(err(format!("duplicate rule_id `{}`", rule.rule_id)));
        }
        if let Some(d) = rule.applies_to.domains.iter().flatten().find(|d| !taxonomy.contains(d)) {
            return Err(err(format!("unknown domain `{d}`")));
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn rules(&self) -> &[ConstraintRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Parses and validates a policy document.
pub fn load_ruleset(document: &str, taxonomy: &DomainTaxonomy) -> Result<RuleSet, MalformedPolicy> {
    grammar::parse(document, taxonomy)
}

/// Ordered from least to most restrictive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Admissible,
    ReviewRequired,
    Denied,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Admissible => "admissible",
            Outcome::ReviewRequired => "review_required",
            Outcome::Denied => "denied",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintVerdict {
    pub task_id: TaskId,
    pub outcome: Outcome,
    /// Every matching rule, in document order.
    pub triggered_rules: Vec<String>,
    pub red_team_flags: BTreeSet<String>,
}

/// Evaluates every rule. Total and pure.
pub fn evaluate(output: &AnalyticalOutput, envelope: &TaskEnvelope, ruleset: &RuleSet) -> ConstraintVerdict {
    let tier = envelope.provenance.resolved_tier;
    let mut outcome = Outcome::Admissible;
    let mut triggered_rules = Vec::new();
    let mut red_team_flags = BTreeSet::new();
    for rule in ruleset.rules() {
        if !rule.matches(&envelope.domain_tag, tier, output.kind) {
            continue;
        }
        triggered_rules.push(rule.rule_id.clone());
        let contributed = match rule.effect {
            Effect::Deny => Outcome::Denied,
            Effect::RequireReview => Outcome::ReviewRequired,
            Effect::RedTeamFlag => {
                red_team_flags.insert(rule.rule_id.clone());
                Outcome::Admissible
            }
            Effect::Admit => Outcome::Admissible,
        };
        outcome = outcome.max(contributed);
        if rule.rationale_required && output.rationale_digest.is_none() {
            outcome = outcome.max(Outcome::ReviewRequired);
        }
    }
    ConstraintVerdict { task_id: envelope.task_id.clone(), outcome, triggered_rules, red_team_flags }
}
