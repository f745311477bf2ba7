//! Layer 1: controlled intake with source classification and provenance.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::digest::Digest;
use crate::textfmt::{self, LineError};
use crate::types::{DomainTag, DomainTaxonomy, PrincipalId, SourceId, TaskId, Tier};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Sensor,
    Report,
    OpenSource,
    Synthetic,
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sensor" => Ok(Channel::Sensor),
            "report" => Ok(Channel::Report),
            "open_source" => Ok(Channel::OpenSource),
            "synthetic" => Ok(Channel::Synthetic),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Sensor => "sensor",
            Channel::Report => "report",
            Channel::OpenSource => "open_source",
            Channel::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_id: SourceId,
    pub declared_tier: Tier,
    pub channel: Channel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyFlag {
    UnknownSource,
    ConflictingDeclarations,
    StaleData,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub source_id: SourceId,
    pub resolved_tier: Tier,
    pub uncertainty_flags: BTreeSet<UncertaintyFlag>,
    pub ingest_time: Timestamp,
}

/// Registered sources. Declarations for one id may repeat; disagreeing
/// repeats are what `classify_source` reports as conflicts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceRegistry {
    entries: BTreeMap<SourceId, Vec<SourceDescriptor>>,
}

impl SourceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, descriptor: SourceDescriptor) {
        self.entries.entry(descriptor.source_id.clone()).or_default().push(descriptor);
    }

    pub fn declarations(&self, id: &SourceId) -> &[SourceDescriptor] {
        self.entries.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn ids(&self) -> impl Iterator<Item = &SourceId> {
        self.entries.keys()
    }

    /// Parses `source_id | tier | channel` lines.
    pub fn parse(text: &str) -> Result<Self, LineError> {
        let mut reg = SourceRegistry::new();
        for (line, fields) in textfmt::records(text) {
            let err = |message: String| LineError { line, message };
            let [id, tier, channel] = fields[..] else {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            };
            if id.is_empty() {
                return Err(err("empty source_id".into()));
            }
            reg.insert(SourceDescriptor {
                source_id: SourceId::new(id),
                declared_tier: tier.parse().map_err(err)?,
                channel: channel.parse().map_err(err)?,
            });
        }
        Ok(reg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in self.entries.values().flatten() {
            out.push_str(&format!("{} | {} | {}\n", d.source_id, d.declared_tier, d.channel.as_str()));
        }
        out
    }
}

/// Resolves the reliability of a source. Never fails: unknown sources degrade to `D`.
pub fn classify_source(source_id: &SourceId, registry: &SourceRegistry, now: Timestamp) -> ProvenanceRecord {
    let decls = registry.declarations(source_id);
    let mut flags = BTreeSet::new();
    let resolved_tier = match decls {
        [] => {
            flags.insert(UncertaintyFlag::UnknownSource);
            Tier::Unverified
        }
        [first, rest @ ..] => {
            if rest.iter().any(|d| d.declared_tier != first.declared_tier) {
                flags.insert(UncertaintyFlag::ConflictingDeclarations);
            }
            decls.iter().map(|d| d.declared_tier).min().unwrap_or(Tier::Unverified)
        }
    };
    ProvenanceRecord { source_id: source_id.clone(), resolved_tier, uncertainty_flags: flags, ingest_time: now }
}

/// A request as it arrives at the controlled interface. Every field is
/// optional on the wire so that missing fields can be diagnosed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRequest {
    pub source_id: Option<String>,
    pub domain_tag: Option<String>,
    pub body: Option<String>,
    pub requested_by: Option<String>,
    /// Age of the underlying data in clock ticks, when the submitter knows it.
    #[serde(default)]
    pub data_age: Option<u64>,
}

impl RawRequest {
    pub fn new(source_id: &str, domain_tag: &str, body: &str, requested_by: &str) -> Self {
        RawRequest {
            source_id: Some(source_id.into()),
            domain_tag: Some(domain_tag.into()),
            body: Some(body.into()),
            requested_by: Some(requested_by.into()),
            data_age: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEnvelope {
    pub task_id: TaskId,
    pub domain_tag: DomainTag,
    pub payload_digest: Digest,
    pub provenance: ProvenanceRecord,
    pub requested_by: PrincipalId,
}

/// Ingest rejections carry the task id that was allocated so the rejection
/// itself can be traced in the audit log.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("{task_id}: domain `{tag}` is not in the gateway taxonomy")]
    RejectedDomain { task_id: TaskId, tag: String },
    #[error("{task_id}: malformed request, missing {missing}")]
    MalformedRequest { task_id: TaskId, missing: &'static str },
}

impl IngestError {
    pub fn task_id(&self) -> &TaskId {
        match self {
            IngestError::RejectedDomain { task_id, .. } | IngestError::MalformedRequest { task_id, .. } => task_id,
        }
    }
}

#[derive(Debug)]
pub struct TaskIdAllocator(AtomicU64);

impl TaskIdAllocator {
    pub fn starting_at(next: u64) -> Self {
        TaskIdAllocator(AtomicU64::new(next))
    }

    pub fn next(&self) -> TaskId {
        TaskId::new(format!("task-{:06}", self.0.fetch_add(1, Ordering::SeqCst)))
    }

    /// Parses the numeric suffix of an id produced by this allocator.
    pub fn ordinal(id: &TaskId) -> Option<u64> {
        id.as_str().strip_prefix("task-")?.parse().ok()
    }
}

impl Default for TaskIdAllocator {
    fn default() -> Self {
        TaskIdAllocator::starting_at(1)
    }
}

#[derive(Debug)]
pub struct Ingestor {
    taxonomy: DomainTaxonomy,
    ids: TaskIdAllocator,
    staleness_limit: Option<u64>,
}

impl Ingestor {
    pub fn new(taxonomy: DomainTaxonomy) -> Self {
        Ingestor { taxonomy, ids: TaskIdAllocator::default(), staleness_limit: None }
    }

    pub fn with_ids(mut self, ids: TaskIdAllocator) -> Self {
        self.ids = ids;
        self
    }

    /// Data older than `limit` ticks is flagged `stale_data`.
    pub fn with_staleness_limit(mut self, limit: u64) -> Self {
        self.staleness_limit = Some(limit);
        self
    }

    pub fn taxonomy(&self) -> &DomainTaxonomy {
        &self.taxonomy
    }

    pub fn ingest_task(
        &self,
        raw: &RawRequest,
        registry: &SourceRegistry,
        now: Timestamp,
    ) -> Result<TaskEnvelope, IngestError> {
        let task_id = self.ids.next();
        let malformed = |missing| IngestError::MalformedRequest { task_id: task_id.clone(), missing };
        let source_id = raw.source_id.as_deref().filter(|s| !s.is_empty()).ok_or_else(|| malformed("source_id"))?;
        let tag = raw.domain_tag.as_deref().filter(|s| !s.is_empty()).ok_or_else(|| malformed("domain_tag"))?;
        let body = raw.body.as_deref().ok_or_else(|| malformed("body"))?;
        let requested_by = raw.requested_by.as_deref().filter(|s| !s.is_empty()).ok_or_else(|| malformed("requested_by"))?;
        let domain_tag = self
            .taxonomy
            .resolve(tag)
            .ok_or_else(|| IngestError::RejectedDomain { task_id: task_id.clone(), tag: tag.to_owned() })?;

        let mut provenance = classify_source(&SourceId::new(source_id), registry, now);
        if let (Some(limit), Some(age)) = (self.staleness_limit, raw.data_age) {
            if age > limit {
                provenance.uncertainty_flags.insert(UncertaintyFlag::StaleData);
            }
        }
        Ok(TaskEnvelope {
            task_id,
            domain_tag,
            payload_digest: Digest::of(body.as_bytes()),
            provenance,
            requested_by: PrincipalId::new(requested_by),
        })
    }
}
