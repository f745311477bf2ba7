//! Layer 2: replaceable analytical suppliers behind one interface.
//!
//! Every supplier speaks its own payload dialect. [`normalize`] is the
//! schema firewall: nothing downstream of it sees a supplier-shaped value.
//! Refusals, withdrawals and malformed payloads are in-band statuses on
//! [`RawSupplierResponse`] so the orchestrator can observe and route around
//! them.

mod dialect;
mod mock;
mod script;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::digest::Digest;
use crate::ingest::TaskEnvelope;
use crate::types::{AdapterId, DomainTag, DomainTaxonomy, TaskId};

pub use dialect::{PayloadDialect, SupplierDraft};
pub use mock::ScriptedSupplier;
pub use script::{Directive, ScriptState, SupplierBehaviorScript};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Available,
    Degraded,
    Withdrawn,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterDescriptor {
    pub adapter_id: AdapterId,
    pub supplier_name: String,
    pub certified_domains: BTreeSet<DomainTag>,
    pub advertised_version: String,
    #[serde(default = "available")]
    pub availability: Availability,
    #[serde(default)]
    pub dialect: PayloadDialect,
}

fn available() -> Availability {
    Availability::Available
}

impl AdapterDescriptor {
    pub fn new<I, S>(id: &str, supplier: &str, version: &str, domains: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AdapterDescriptor {
            adapter_id: AdapterId::new(id),
            supplier_name: supplier.to_owned(),
            certified_domains: domains.into_iter().map(|d| DomainTag::new(d)).collect(),
            advertised_version: version.to_owned(),
            availability: Availability::Available,
            dialect: PayloadDialect::Json,
        }
    }

    pub fn with_dialect(mut self, dialect: PayloadDialect) -> Self {
        self.dialect = dialect;
        self
    }

    pub fn validate(&self, taxonomy: &DomainTaxonomy) -> Result<(), AdapterError> {
        if self.adapter_id.as_str().is_empty() {
            return Err(AdapterError::InvalidDescriptor("empty adapter_id".into()));
        }
        if let Some(bad) = self.certified_domains.iter().find(|d| !taxonomy.contains(d)) {
            return Err(AdapterError::InvalidDescriptor(format!(
                "{} certifies unknown domain `{bad}`",
                self.adapter_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Refused,
    Unavailable,
    Malformed,
}

impl ResponseStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseStatus::Ok => "ok",
            ResponseStatus::Refused => "refused",
            ResponseStatus::Unavailable => "unavailable",
            ResponseStatus::Malformed => "malformed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSupplierResponse {
    pub adapter_id: AdapterId,
    pub reported_version: String,
    pub status: ResponseStatus,
    /// Present iff `status` is `Refused`.
    pub refusal_reason: Option<String>,
    /// Supplier-shaped payload, parsed according to the descriptor's dialect.
    pub body: String,
    pub rationale_fields_present: bool,
}

/// The four analytical kinds. There is no command or action kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Summary,
    AnomalyFlags,
    OptionSet,
    StructuredAnalysis,
}

impl OutputKind {
    pub const ALL: [OutputKind; 4] =
        [OutputKind::Summary, OutputKind::AnomalyFlags, OutputKind::OptionSet, OutputKind::StructuredAnalysis];

    pub fn as_str(self) -> &'static str {
        match self {
            OutputKind::Summary => "summary",
            OutputKind::AnomalyFlags => "anomaly_flags",
            OutputKind::OptionSet => "option_set",
            OutputKind::StructuredAnalysis => "structured_analysis",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        OutputKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// The kind a supplier is expected to produce for a domain.
    pub fn for_domain(domain: &DomainTag) -> Self {
        match domain.as_str() {
            "summarization" => OutputKind::Summary,
            "anomaly_detection" => OutputKind::AnomalyFlags,
            "option_generation" => OutputKind::OptionSet,
            _ => OutputKind::StructuredAnalysis,
        }
    }
}

impl fmt::Display for OutputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredOption {
    pub option_id: String,
    pub description_digest: Digest,
    pub score: f64,
}

/// Vendor-neutral analytical output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalOutput {
    pub task_id: TaskId,
    pub adapter_id: AdapterId,
    pub version_used: String,
    pub kind: OutputKind,
    pub options: Vec<ScoredOption>,
    pub confidence: f64,
    pub rationale_digest: Option<Digest>,
    pub produced_at: Timestamp,
}

impl AnalyticalOutput {
    /// Digest over every field except `adapter_id` and `produced_at`.
    /// Two suppliers whose outputs share this digest are interchangeable downstream.
    pub fn content_digest(&self) -> Digest {
        let mut h = crate::digest::Hasher::new();
        h.field(self.task_id.as_str().as_bytes())
            .field(self.version_used.as_bytes())
            .field(self.kind.as_str().as_bytes());
        for o in &self.options {
            h.field(o.option_id.as_bytes()).update(o.description_digest.as_bytes()).update(&o.score.to_bits().to_be_bytes());
        }
        h.update(&self.confidence.to_bits().to_be_bytes());
        match &self.rationale_digest {
            Some(d) => h.update(&[1]).update(d.as_bytes()),
            None => h.update(&[0]),
        };
        h.finish()
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AdapterError {
    #[error("unknown adapter `{0}`")]
    UnknownAdapter(AdapterId),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("normalization failed for {adapter_id}: {reason}")]
pub struct NormalizationFailure {
    pub adapter_id: AdapterId,
    pub reason: String,
}

/// A source of analytical responses. Implementations serialize their own
/// internal state; the registry hands out shared references.
pub trait Supplier: Send + Sync + fmt::Debug {
    fn invoke(&self, envelope: &TaskEnvelope) -> RawSupplierResponse;

    /// Availability as the supplier itself reports it.
    fn probe(&self) -> Availability;
}

#[derive(Clone, Debug)]
pub struct RegisteredAdapter {
    pub descriptor: AdapterDescriptor,
    pub supplier: Arc<dyn Supplier>,
}

/// Adapter registry. Cloning is cheap and yields an immutable snapshot.
#[derive(Clone, Debug, Default)]
pub struct AdapterRegistry {
    entries: BTreeMap<AdapterId, RegisteredAdapter>,
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces; returns `true` when an entry was replaced.
    pub fn register(
        &mut self,
        descriptor: AdapterDescriptor,
        supplier: Arc<dyn Supplier>,
        taxonomy: &DomainTaxonomy,
    ) -> Result<bool, AdapterError> {
        descriptor.validate(taxonomy)?;
        let id = descriptor.adapter_id.clone();
        Ok(self.entries.insert(id, RegisteredAdapter { descriptor, supplier }).is_some())
    }

    pub fn get(&self, id: &AdapterId) -> Result<&RegisteredAdapter, AdapterError> {
        self.entries.get(id).ok_or_else(|| AdapterError::UnknownAdapter(id.clone()))
    }

    pub fn contains(&self, id: &AdapterId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn descriptor(&self, id: &AdapterId) -> Result<&AdapterDescriptor, AdapterError> {
        self.get(id).map(|e| &e.descriptor)
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &AdapterDescriptor> {
        self.entries.values().map(|e| &e.descriptor)
    }

    pub fn invoke(&self, id: &AdapterId, envelope: &TaskEnvelope) -> Result<RawSupplierResponse, AdapterError> {
        Ok(self.get(id)?.supplier.invoke(envelope))
    }

    /// The worse of the registry's administrative availability and the supplier's own report.
    pub fn health_probe(&self, id: &AdapterId) -> Result<Availability, AdapterError> {
        let entry = self.get(id)?;
        Ok(entry.descriptor.availability.max(entry.supplier.probe()))
    }

    /// Keeps only the entries whose descriptors are listed, restoring the
    /// listed descriptors verbatim. Used by configuration rollback.
    pub fn restrict_to(&self, descriptors: &[AdapterDescriptor]) -> AdapterRegistry {
        let entries = descriptors
            .iter()
            .filter_map(|d| {
                self.entries.get(&d.adapter_id).map(|e| {
                    (d.adapter_id.clone(), RegisteredAdapter { descriptor: d.clone(), supplier: e.supplier.clone() })
                })
            })
            .collect();
        AdapterRegistry { entries }
    }
}

/// Maps a supplier response into the common schema.
pub fn normalize(
    raw: &RawSupplierResponse,
    descriptor: &AdapterDescriptor,
    task_id: &TaskId,
    now: Timestamp,
) -> Result<AnalyticalOutput, NormalizationFailure> {
    let fail = |reason: String| NormalizationFailure { adapter_id: raw.adapter_id.clone(), reason };
    if raw.status != ResponseStatus::Ok {
        return Err(fail(format!("status {}", raw.status.as_str())));
    }
    let draft = descriptor.dialect.decode(&raw.body).map_err(fail)?;
    if raw.rationale_fields_present && draft.rationale.is_none() {
        return Err(fail("rationale advertised but absent".into()));
    }
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    if !unit(draft.confidence) {
        return Err(fail(format!("confidence {} outside [0,1]", draft.confidence)));
    }
    let mut options = Vec::with_capacity(draft.options.len());
    for (option_id, text, score) in draft.options {
        if !unit(score) {
            return Err(fail(format!("score {score} outside [0,1]")));
        }
        options.push(ScoredOption { option_id, description_digest: Digest::of(text.as_bytes()), score });
    }
    let rationale_digest = match (&draft.rationale, raw.rationale_fields_present) {
        (Some(r), true) => Some(Digest::of(r.as_bytes())),
        _ => None,
    };
    Ok(AnalyticalOutput {
        task_id: task_id.clone(),
        adapter_id: raw.adapter_id.clone(),
        version_used: raw.reported_version.clone(),
        kind: draft.kind,
        options,
        confidence: draft.confidence,
        rationale_digest,
        produced_at: now,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Ingestor, RawRequest, SourceRegistry};

    fn envelope(domain: &str) -> TaskEnvelope {
        Ingestor::new(DomainTaxonomy::default())
            .ingest_task(&RawRequest::new("s", domain, "body", "ops"), &SourceRegistry::new(), Timestamp(0))
            .unwrap()
    }

    fn mock(id: &str, script: SupplierBehaviorScript) -> (AdapterDescriptor, Arc<ScriptedSupplier>) {
        let d = AdapterDescriptor::new(id, "acme", "1.2", ["summarization", "anomaly_detection", "option_generation"]);
        let s = Arc::new(ScriptedSupplier::new(&d, 7, script));
        (d, s)
    }

    #[test]
    fn register_inserts_then_replaces() {
        let tax = DomainTaxonomy::default();
        let mut reg = AdapterRegistry::new();
        let (d, s) = mock("x", SupplierBehaviorScript::none());
        assert!(!reg.register(d.clone(), s.clone(), &tax).unwrap());
        let mut d2 = d.clone();
        d2.advertised_version = "1.3".into();
        assert!(reg.register(d2, s, &tax).unwrap());
        assert_eq!(reg.descriptors().count(), 1);
        assert_eq!(reg.descriptor(&"x".into()).unwrap().advertised_version, "1.3");
    }

    #[test]
    fn descriptor_with_unknown_domain_is_invalid() {
        let d = AdapterDescriptor::new("x", "acme", "1", ["zzz"]);
        let s = Arc::new(ScriptedSupplier::new(&d, 0, SupplierBehaviorScript::none()));
        let err = AdapterRegistry::new().register(d, s, &DomainTaxonomy::default()).unwrap_err();
        assert!(matches!(err, AdapterError::InvalidDescriptor(_)));
    }

    #[test]
    fn neutral_mock_answers_with_advertised_version() {
        let (_, s) = mock("x", SupplierBehaviorScript::none());
        let r = s.invoke(&envelope("summarization"));
        assert_eq!(r.status, ResponseStatus::Ok);
        assert_eq!(r.reported_version, "1.2");
        assert_eq!(s.probe(), Availability::Available);
    }

    #[test]
    fn injected_policy_refuses() {
        let script = SupplierBehaviorScript::new(vec![Directive::InjectPolicy {
            from_step: 0,
            domains: ["anomaly_detection".into()].into(),
        }]);
        let (_, s) = mock("x", script);
        let r = s.invoke(&envelope("anomaly_detection"));
        assert_eq!(r.status, ResponseStatus::Refused);
        assert_eq!(r.refusal_reason.as_deref(), Some("policy"));
        assert_eq!(s.invoke(&envelope("summarization")).status, ResponseStatus::Ok);
    }

    #[test]
    fn unknown_adapter_is_the_only_invoke_error() {
        let reg = AdapterRegistry::new();
        assert!(matches!(reg.invoke(&"nope".into(), &envelope("summarization")), Err(AdapterError::UnknownAdapter(_))));
        assert!(reg.health_probe(&"nope".into()).is_err());
    }

    #[test]
    fn normalize_preserves_option_order_and_rationale() {
        let (d, s) = mock("x", SupplierBehaviorScript::none());
        let env = envelope("option_generation");
        let raw = s.invoke(&env);
        let out = normalize(&raw, &d, &env.task_id, Timestamp(9)).unwrap();
        assert_eq!(out.kind, OutputKind::OptionSet);
        let draft = d.dialect.decode(&raw.body).unwrap();
        let scores: Vec<f64> = draft.options.iter().map(|o| o.2).collect();
        assert_eq!(out.options.iter().map(|o| o.score).collect::<Vec<_>>(), scores);
        assert!(out.rationale_digest.is_some());
    }

    #[test]
    fn explicit_three_option_payload() {
        let d = AdapterDescriptor::new("x", "acme", "1", ["option_generation"]).with_dialect(PayloadDialect::LineKv);
        let raw = RawSupplierResponse {
            adapter_id: "x".into(),
            reported_version: "1".into(),
            status: ResponseStatus::Ok,
            refusal_reason: None,
            body: "kind option_set\nconf 0.8\nopt a 0.9 first\nopt b 0.2 second\nopt c 0.5 third\n".into(),
            rationale_fields_present: false,
        };
        let out = normalize(&raw, &d, &"t".into(), Timestamp(0)).unwrap();
        let ids: Vec<_> = out.options.iter().map(|o| (o.option_id.as_str(), o.score)).collect();
        assert_eq!(ids, vec![("a", 0.9), ("b", 0.2), ("c", 0.5)]);
        assert_eq!(out.rationale_digest, None);
    }

    #[test]
    fn omitted_rationale_propagates_as_absent() {
        let script = SupplierBehaviorScript::new(vec![Directive::OmitRationale { from_step: 0 }]);
        let (d, s) = mock("x", script);
        let env = envelope("summarization");
        let raw = s.invoke(&env);
        assert!(!raw.rationale_fields_present);
        assert_eq!(normalize(&raw, &d, &env.task_id, Timestamp(0)).unwrap().rationale_digest, None);
    }

    #[test]
    fn non_ok_status_fails_normalization() {
        let script = SupplierBehaviorScript::new(vec![Directive::InjectPolicy {
            from_step: 0,
            domains: ["summarization".into()].into(),
        }]);
        let (d, s) = mock("x", script);
        let env = envelope("summarization");
        assert!(normalize(&s.invoke(&env), &d, &env.task_id, Timestamp(0)).is_err());
    }

    #[test]
    fn command_kind_is_not_representable() {
        let d = AdapterDescriptor::new("x", "acme", "1", ["summarization"]).with_dialect(PayloadDialect::LineKv);
        let raw = RawSupplierResponse {
            adapter_id: "x".into(),
            reported_version: "1".into(),
            status: ResponseStatus::Ok,
            refusal_reason: None,
            body: "kind command\nconf 0.9\n".into(),
            rationale_fields_present: false,
        };
        assert!(normalize(&raw, &d, &"t".into(), Timestamp(0)).is_err());
    }

    #[test]
    fn probe_combines_registry_and_supplier_state() {
        let tax = DomainTaxonomy::default();
        let mut reg = AdapterRegistry::new();
        let (mut d, s) = mock("x", SupplierBehaviorScript::none());
        d.availability = Availability::Withdrawn;
        reg.register(d, s, &tax).unwrap();
        assert_eq!(reg.health_probe(&"x".into()).unwrap(), Availability::Withdrawn);
    }
}
