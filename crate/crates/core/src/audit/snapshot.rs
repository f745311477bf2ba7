//! Configuration snapshots for rollback. A snapshot holds only configuration;
//! the log is never part of what gets restored.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::AdapterDescriptor;
use crate::constraints::{serialize_ruleset, RuleSet};
use crate::digest::Digest;
use crate::orchestrator::RoutingPolicy;
use crate::types::AdapterId;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnapshotRef(String);

impl SnapshotRef {
    pub fn new(s: impl Into<String>) -> Self {
        SnapshotRef(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SnapshotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub label: String,
    pub policy: RoutingPolicy,
    pub ruleset: RuleSet,
    /// `adapter -> pinned version` at snapshot time.
    pub pins: BTreeMap<AdapterId, String>,
    pub adapters: Vec<AdapterDescriptor>,
}

impl ConfigSnapshot {
    /// A stable text rendering of the configuration, label excluded.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[policy]\n");
        out.push_str(&self.policy.to_toml());
        out.push_str("\n[ruleset]\n");
        out.push_str(&serialize_ruleset(&self.ruleset));
        out.push_str("\n[pins]\n");
        for (id, v) in &self.pins {
            out.push_str(&format!("{id} = {v}\n"));
        }
        out.push_str("\n[adapters]\n");
        for d in &self.adapters {
            out.push_str(&serde_json::to_string(d).expect("descriptors serialize"));
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self.canonical_text().as_bytes())
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("unknown snapshot `{0}`")]
    UnknownSnapshot(SnapshotRef),
}

#[derive(Clone, Debug, Default)]
pub struct SnapshotStore {
    snapshots: BTreeMap<SnapshotRef, ConfigSnapshot>,
}

impl SnapshotStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, snapshot: ConfigSnapshot) -> SnapshotRef {
        let r = SnapshotRef::new(format!("snap-{:04}", self.snapshots.len() + 1));
        self.snapshots.insert(r.clone(), snapshot);
        r
    }

    pub fn get(&self, r: &SnapshotRef) -> Result<&ConfigSnapshot, SnapshotError> {
        self.snapshots.get(r).ok_or_else(|| SnapshotError::UnknownSnapshot(r.clone()))
    }

    pub fn refs(&self) -> impl Iterator<Item = &SnapshotRef> {
        self.snapshots.keys()
    }
}
