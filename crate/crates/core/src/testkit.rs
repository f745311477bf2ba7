//! Fixtures shared by unit tests.

use std::collections::BTreeSet;

use crate::adapters::{AnalyticalOutput, OutputKind, ScoredOption};
use crate::authority::{Principal, PrincipalRegistry};
use crate::clock::Timestamp;
use crate::digest::Digest;
use crate::ingest::{ProvenanceRecord, TaskEnvelope};
use crate::types::{DomainTag, PrincipalId, SourceId, TaskId, Tier};

pub fn envelope(task: &str, domain: &str, tier: Tier) -> TaskEnvelope {
    TaskEnvelope {
        task_id: TaskId::new(task),
        domain_tag: DomainTag::new(domain),
        payload_digest: Digest::of(task.as_bytes()),
        provenance: ProvenanceRecord {
            source_id: SourceId::new("src"),
            resolved_tier: tier,
            uncertainty_flags: BTreeSet::new(),
            ingest_time: Timestamp(0),
        },
        requested_by: PrincipalId::new("ops"),
    }
}

pub fn output(task: &str, kind: OutputKind, rationale: bool) -> AnalyticalOutput {
    AnalyticalOutput {
        task_id: TaskId::new(task),
        adapter_id: "alpha".into(),
        version_used: "1.0".into(),
        kind,
        options: vec![ScoredOption { option_id: "o1".into(), description_digest: Digest::of(b"o1"), score: 0.5 }],
        confidence: 0.9,
        rationale_digest: rationale.then(|| Digest::of(b"why")),
        produced_at: Timestamp(0),
    }
}

pub fn principals() -> PrincipalRegistry {
    PrincipalRegistry::parse(
        "reviewer-1 | Level One | 1\nreviewer-2 | Level Two | 2\nreviewer-3 | Level Three | 3\nadmin | Admin | 3 | admin\n",
    )
    .unwrap()
}

pub fn admin() -> Principal {
    principals().get(&"admin".into()).unwrap().clone()
}
