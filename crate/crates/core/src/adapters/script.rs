use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::types::DomainTag;

/// One scripted supplier behavior, active from its step onward. Steps count
/// the supplier's own invocations, starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "directive", rename_all = "snake_case")]
pub enum Directive {
    InjectPolicy { from_step: u64, domains: BTreeSet<DomainTag> },
    DriftVersion {
        at_step: u64,
        new_version: String,
        #[serde(default)]
        output_perturbation: f64,
    },
    Withdraw { at_step: u64 },
    OmitRationale { from_step: u64 },
}

impl Directive {
    fn step(&self) -> u64 {
        match self {
            Directive::InjectPolicy { from_step, .. } | Directive::OmitRationale { from_step } => *from_step,
            Directive::DriftVersion { at_step, .. } | Directive::Withdraw { at_step } => *at_step,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SupplierBehaviorScript {
    directives: Vec<Directive>,
}

/// What a script prescribes for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptState {
    pub refused_domains: BTreeSet<DomainTag>,
    /// `(version, perturbation)` of the latest active drift.
    pub drift: Option<(String, f64)>,
    pub withdrawn: bool,
    pub omit_rationale: bool,
}

impl SupplierBehaviorScript {
    /// The neutral script.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(directives: Vec<Directive>) -> Self {
        SupplierBehaviorScript { directives }
    }

    pub fn directives(&self) -> &[Directive] {
        &self.directives
    }

    pub fn is_neutral(&self) -> bool {
        self.directives.is_empty()
    }

    pub fn state_at(&self, step: u64) -> ScriptState {
        let mut state =
            ScriptState { refused_domains: BTreeSet::new(), drift: None, withdrawn: false, omit_rationale: false };
        let mut drift_step = None;
        for d in self.directives.iter().filter(|d| d.step() <= step) {
            match d {
                Directive::InjectPolicy { domains, .. } => state.refused_domains.extend(domains.iter().cloned()),
                Directive::DriftVersion { at_step, new_version, output_perturbation } => {
                    if drift_step.is_none_or(|s| *at_step >= s) {
                        drift_step = Some(*at_step);
                        state.drift = Some((new_version.clone(), *output_perturbation));
                    }
                }
                Directive::Withdraw { .. } => state.withdrawn = true,
                Directive::OmitRationale { .. } => state.omit_rationale = true,
            }
        }
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directives_activate_at_their_step() {
        let s = SupplierBehaviorScript::new(vec![
            Directive::Withdraw { at_step: 3 },
            Directive::DriftVersion { at_step: 1, new_version: "2".into(), output_perturbation: 0.0 },
            Directive::DriftVersion { at_step: 2, new_version: "3".into(), output_perturbation: 0.1 },
        ]);
        assert!(!s.state_at(2).withdrawn);
        assert!(s.state_at(3).withdrawn);
        assert_eq!(s.state_at(0).drift, None);
        assert_eq!(s.state_at(1).drift, Some(("2".into(), 0.0)));
        assert_eq!(s.state_at(5).drift, Some(("3".into(), 0.1)));
    }

    #[test]
    fn toml_form() {
        #[derive(Deserialize)]
        struct Wrap {
            script: SupplierBehaviorScript,
        }
        let w: Wrap = toml::from_str(
            r#"
            [[script]]
            directive = "withdraw"
            at_step = 3

            [[script]]
            directive = "inject_policy"
            from_step = 0
            domains = ["anomaly_detection"]
            "#,
        )
        .unwrap();
        assert_eq!(w.script.directives().len(), 2);
        assert!(w.script.state_at(0).refused_domains.contains(&DomainTag::new("anomaly_detection")));
    }
}
