use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::adapters::AdapterRegistry;
use crate::types::{AdapterId, DomainTag, DomainTaxonomy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradedMode {
    FailClosed,
    QueueForHuman,
    /// Walk the domain's `internal_fallback` list, then fail closed.
    InternalOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainRoute {
    /// Total preference order; earlier entries win.
    pub preference: Vec<AdapterId>,
    pub confidence_threshold: f64,
    pub degraded_mode: DegradedMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub internal_fallback: Vec<AdapterId>,
}

/// Sovereign routing policy, loaded from a TOML document:
///
/// ```toml
/// strict_pins = true
///
/// [domain.summarization]
/// preference = ["alpha", "beta"]
/// confidence_threshold = 0.5
/// degraded_mode = "queue_for_human"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingPolicy {
    /// Treat responses from unpinned adapters as version mismatches.
    #[serde(default = "strict_default")]
    pub strict_pins: bool,
    #[serde(default)]
    pub domain: BTreeMap<DomainTag, DomainRoute>,
}

fn strict_default() -> bool {
    true
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        RoutingPolicy { strict_pins: true, domain: BTreeMap::new() }
    }
}

impl RoutingPolicy {
    pub fn parse(text: &str) -> Result<Self, OrchestratorError> {
        toml::from_str(text).map_err(|e| OrchestratorError::InvalidPolicy(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("routing policy serializes")
    }

    /// Same route for every domain of the taxonomy.
    pub fn uniform(taxonomy: &DomainTaxonomy, route: DomainRoute) -> Self {
        RoutingPolicy { strict_pins: true, domain: taxonomy.iter().map(|d| (d.clone(), route.clone())).collect() }
    }

    pub fn route_for(&self, domain: &DomainTag) -> Option<&DomainRoute> {
        self.domain.get(domain)
    }

    /// Checks the policy against the taxonomy and the registry it will route over.
    pub fn validate(&self, taxonomy: &DomainTaxonomy, registry: &AdapterRegistry) -> Result<(), OrchestratorError> {
        for (domain, route) in &self.domain {
            let bad = |m: String| Err(OrchestratorError::InvalidPolicy(format!("domain `{domain}`: {m}")));
            if !taxonomy.contains(domain) {
                return bad("not in taxonomy".into());
            }
            if !(0.0..=1.0).contains(&route.confidence_threshold) {
                return bad(format!("confidence_threshold {} outside [0,1]", route.confidence_threshold));
            }
            let mut seen = std::collections::BTreeSet::new();
            for id in &route.preference {
                if !seen.insert(id) {
                    return bad(format!("adapter `{id}` listed twice"));
                }
            }
            if let Some(id) = route.preference.iter().chain(&route.internal_fallback).find(|id| !registry.contains(id)) {
                return bad(format!("unknown adapter `{id}`"));
            }
        }
        Ok(())
    }
}
