//! The policy document grammar.
//!
//! ```text
//! document := { blank | comment | block }
//! comment  := ws* "#" text NL
//! block    := "rule" SP rule_id NL { ws+ clause NL } "end" NL
//! clause   := "effect" SP ("admit" | "deny" | "require_review" | "red_team_flag")
//!           | "domain" { SP domain_tag }+
//!           | "tier" { SP ("A" | "B" | "C" | "D") }+
//!           | "kind" { SP ("summary" | "anomaly_flags" | "option_set" | "structured_analysis") }+
//!           | "min_tier" SP ("A" | "B" | "C" | "D")
//!           | "rationale_required" SP ("true" | "false")
//! rule_id  := [A-Za-z0-9_.-]+
//! ```
//!
//! `effect` is required; every other clause appears at most once. Tokens
//! are separated by runs of spaces or tabs.

use std::collections::BTreeSet;

use super::{ConstraintRule, Effect, MalformedPolicy, Predicate, RuleSet};
use crate::adapters::OutputKind;
use crate::types::{DomainTag, DomainTaxonomy, Tier};

fn valid_id(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

struct Pending {
    line: usize,
    rule: ConstraintRule,
    effect_seen: bool,
    seen: BTreeSet<&'static str>,
}

pub(super) fn parse(document: &str, taxonomy: &DomainTaxonomy) -> Result<RuleSet, MalformedPolicy> {
    let mut rs = RuleSet::new();
    let mut open: Option<Pending> = None;
    let mut last_line = 0;
    for (i, raw) in document.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let err = |message: String| MalformedPolicy { line, message };
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut tokens = text.split_whitespace();
        let head = tokens.next().unwrap_or_default();
        let args: Vec<&str> = tokens.collect();
        match (head, open.as_mut()) {
            ("rule", None) => {
                let [id] = args[..] else {
                    return Err(err("expected `rule <rule_id>`".into()));
                };
                if !valid_id(id) {
                    return Err(err(format!("invalid rule_id `{id}`")));
                }
                open = Some(Pending {
                    line,
                    rule: ConstraintRule::new(id, Effect::Admit),
                    effect_seen: false,
                    seen: BTreeSet::new(),
                });
            }
            ("rule", Some(p)) => return Err(err(format!("rule `{}` is not closed with `end`", p.rule.rule_id))),
            ("end", Some(_)) => {
                if !args.is_empty() {
                    return Err(err("`end` takes no arguments".into()));
                }
                let p = open.take().expect("open rule");
                if !p.effect_seen {
                    return Err(MalformedPolicy { line: p.line, message: format!("rule `{}` has no effect", p.rule.rule_id) });
                }
                rs.push(p.rule, taxonomy, p.line)?;
            }
            (_, None) => return Err(err(format!("`{head}` outside a rule block"))),
            (clause, Some(p)) => apply_clause(p, clause, &args, taxonomy).map_err(err)?,
        }
    }
    if let Some(p) = open {
        return Err(MalformedPolicy { line: last_line, message: format!("rule `{}` is not closed with `end`", p.rule.rule_id) });
    }
    Ok(rs)
}

fn apply_clause(p: &mut Pending, clause: &str, args: &[&str], taxonomy: &DomainTaxonomy) -> Result<(), String> {
    let key: &'static str = match clause {
        "effect" => "effect",
        "domain" => "domain",
        "tier" => "tier",
        "kind" => "kind",
        "min_tier" => "min_tier",
        "rationale_required" => "rationale_required",
        other => return Err(format!("unknown clause `{other}`")),
    };
    if !p.seen.insert(key) {
        return Err(format!("duplicate `{key}` clause"));
    }
    if args.is_empty() {
        return Err(format!("`{key}` needs a value"));
    }
    let single = || match args {
        [v] => Ok(*v),
        _ => Err(format!("`{key}` takes exactly one value")),
    };
    let rule = &mut p.rule;
    match key {
        "effect" => {
            let v = single()?;
            rule.effect = Effect::ALL.into_iter().find(|e| e.as_str() == v).ok_or(format!("unknown effect `{v}`"))?;
            p.effect_seen = true;
        }
        "domain" => {
            let mut set = BTreeSet::new();
            for d in args {
                let tag = DomainTag::new(*d);
                if !taxonomy.contains(&tag) {
                    return Err(format!("unknown domain `{d}`"));
                }
                set.insert(tag);
            }
            rule.applies_to.domains = Some(set);
        }
        "tier" => {
            rule.applies_to.tiers = Some(args.iter().map(|t| parse_tier(t)).collect::<Result<_, _>>()?);
        }
        "kind" => {
            rule.applies_to.kinds = Some(
                args.iter()
                    .map(|k| OutputKind::parse(k).ok_or(format!("unknown output kind `{k}`")))
                    .collect::<Result<_, _>>()?,
            );
        }
        "min_tier" => rule.min_tier = Some(parse_tier(single()?)?),
        "rationale_required" => {
            rule.rationale_required = match single()? {
                "true" => true,
                "false" => false,
                v => return Err(format!("expected true or false, found `{v}`")),
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn parse_tier(s: &str) -> Result<Tier, String> {
    match s {
        "A" | "B" | "C" | "D" => s.parse(),
        other => Err(format!("unknown tier `{other}`")),
    }
}

/// Canonical text form; `parse(serialize_ruleset(rs)) == rs`.
pub fn serialize_ruleset(rs: &RuleSet) -> String {
    let mut out = String::new();
    for (i, rule) in rs.rules().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("rule {}\n  effect {}\n", rule.rule_id, rule.effect.as_str()));
        let Predicate { domains, tiers, kinds } = &rule.applies_to;
        if let Some(ds) = domains {
            out.push_str("  domain");
            ds.iter().for_each(|d| out.push_str(&format!(" {d}")));
            out.push('\n');
        }
        if let Some(ts) = tiers {
            out.push_str("  tier");
            ts.iter().rev().for_each(|t| out.push_str(&format!(" {t}")));
            out.push('\n');
        }
        if let Some(ks) = kinds {
            out.push_str("  kind");
            ks.iter().for_each(|k| out.push_str(&format!(" {k}")));
            out.push('\n');
        }
        if let Some(t) = rule.min_tier {
            out.push_str(&format!("  min_tier {t}\n"));
        }
        if rule.rationale_required {
            out.push_str("  rationale_required true\n");
        }
        out.push_str("end\n");
    }
    out
}
