use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::adapters::AdapterRegistry;
use crate::audit::events::{AdminPinPayload, AdminRollbackPayload, RollbackTarget};
use crate::audit::{AuditLog, EventKind};
use crate::authority::Principal;
use crate::clock::Timestamp;
use crate::types::{AdapterId, PrincipalId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinEntry {
    pub version: String,
    pub pinned_at: Timestamp,
    pub principal: PrincipalId,
}

/// The sovereign lock on one adapter's version. History only grows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionPin {
    adapter_id: AdapterId,
    pin_history: Vec<PinEntry>,
}

impl VersionPin {
    pub fn adapter_id(&self) -> &AdapterId {
        &self.adapter_id
    }

    /// Always the last history entry.
    pub fn pinned_version(&self) -> &str {
        &self.pin_history.last().expect("pins are created with one entry").version
    }

    pub fn history(&self) -> &[PinEntry] {
        &self.pin_history
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinStore {
    pins: BTreeMap<AdapterId, VersionPin>,
}

fn require_admin(principal: &Principal) -> Result<(), OrchestratorError> {
    if principal.admin {
        Ok(())
    } else {
        Err(OrchestratorError::UnauthorizedPrincipal(principal.id.clone()))
    }
}

impl PinStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &AdapterId) -> Option<&VersionPin> {
        self.pins.get(id)
    }

    pub fn pinned_version(&self, id: &AdapterId) -> Option<&str> {
        self.pins.get(id).map(VersionPin::pinned_version)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VersionPin> {
        self.pins.values()
    }

    fn push(&mut self, id: &AdapterId, entry: PinEntry) -> usize {
        let pin = self
            .pins
            .entry(id.clone())
            .or_insert_with(|| VersionPin { adapter_id: id.clone(), pin_history: Vec::new() });
        pin.pin_history.push(entry);
        pin.pin_history.len()
    }

    pub fn pin_version(
        &mut self,
        adapter_id: &AdapterId,
        version: &str,
        principal: &Principal,
        registry: &AdapterRegistry,
        log: &AuditLog,
        now: Timestamp,
    ) -> Result<(), OrchestratorError> {
        registry.get(adapter_id).map_err(|_| OrchestratorError::UnknownAdapter(adapter_id.clone()))?;
        require_admin(principal)?;
        let entry = PinEntry { version: version.to_owned(), pinned_at: now, principal: principal.id.clone() };
        let history_len = self.push(adapter_id, entry);
        log.append(
            EventKind::AdminPin,
            None,
            &AdminPinPayload {
                adapter_id: adapter_id.clone(),
                version: version.to_owned(),
                principal: principal.id.clone(),
                history_len,
            },
        );
        Ok(())
    }

    /// Re-pins the version that was in force before the current one. The
    /// rollback is itself appended, so rolling back twice returns to where
    /// it started.
    pub fn rollback_version(
        &mut self,
        adapter_id: &AdapterId,
        principal: &Principal,
        log: &AuditLog,
        now: Timestamp,
    ) -> Result<String, OrchestratorError> {
        require_admin(principal)?;
        let history = self.pins.get(adapter_id).map(VersionPin::history).unwrap_or(&[]);
        let [.., previous, _] = history else {
            return Err(OrchestratorError::NothingToRollback(adapter_id.clone()));
        };
        let version = previous.version.clone();
        let history_len =
            self.push(adapter_id, PinEntry { version: version.clone(), pinned_at: now, principal: principal.id.clone() });
        log.append(
            EventKind::AdminRollback,
            None,
            &AdminRollbackPayload {
                target: RollbackTarget::Version,
                principal: principal.id.clone(),
                adapter_id: Some(adapter_id.clone()),
                version: Some(version.clone()),
                snapshot: None,
                history_len: Some(history_len),
            },
        );
        Ok(version)
    }

    /// Appends restoration entries so that every adapter in `target` is
    /// pinned to its listed version again. Returns the adapters touched.
    pub fn restore_from(
        &mut self,
        target: &BTreeMap<AdapterId, String>,
        principal: &PrincipalId,
        now: Timestamp,
    ) -> Vec<AdapterId> {
        let mut touched = Vec::new();
        for (id, version) in target {
            if self.pinned_version(id) != Some(version.as_str()) {
                self.push(id, PinEntry { version: version.clone(), pinned_at: now, principal: principal.clone() });
                touched.push(id.clone());
            }
        }
        touched
    }

    /// `adapter -> pinned version`, the part of the pin state that routing reads.
    pub fn pinned_map(&self) -> BTreeMap<AdapterId, String> {
        self.pins.iter().map(|(k, v)| (k.clone(), v.pinned_version().to_owned())).collect()
    }
}
