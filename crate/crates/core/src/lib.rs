//! A model-agnostic decision-support gateway.
//!
//! Analytical models are treated as replaceable suppliers sitting behind a
//! state-owned control structure. A task moves through six layers, each one a
//! module of this crate:
//!
//! 1. [`ingest`]: controlled intake, source reliability and provenance.
//! 2. [`adapters`]: replaceable supplier modules and output normalization.
//! 3. [`orchestrator`]: routing, fallback, confidence gates, version pins.
//! 4. [`constraints`]: sovereign admissibility rules.
//! 5. [`authority`]: human review queue and the only constructor of actions.
//! 6. [`audit`]: hash-chained event log, trace reconstruction, config rollback.
//!
//! [`gateway`] composes the layers into one pipeline and exposes the service
//! API. [`threat_sim`] drives scripted suppliers through the five supplier
//! boundary-control scenarios and scores the resulting logs.
//!
//! ```
//! use sovgate::digest::Digest;
//!
//! let genesis = Digest::of(b"");
//! assert_eq!(
//!     genesis.to_hex(),
//!     "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
//! );
//! ```

pub mod adapters;
pub mod audit;
pub mod authority;
pub mod clock;
pub mod constraints;
pub mod digest;
pub mod gateway;
pub mod ingest;
pub mod orchestrator;
pub mod textfmt;
pub mod threat_sim;
pub mod types;

#[cfg(test)]
pub(crate) mod testkit;

pub use adapters::{AdapterDescriptor, AdapterRegistry, AnalyticalOutput, RawSupplierResponse};
pub use audit::{verify_chain, verify_ndjson, AuditEvent, AuditLog, ChainVerdict, DecisionTrace};
pub use authority::{ActionRecord, AuthorizationDecision, DecisionKind, Principal, PrincipalRegistry, ReviewQueue};
pub use constraints::{evaluate, load_ruleset, ConstraintVerdict, Outcome, RuleSet};
pub use gateway::{Gateway, GatewayConfig, GatewayError};
pub use ingest::{ProvenanceRecord, RawRequest, SourceRegistry, TaskEnvelope};
pub use orchestrator::{route, PinStore, RoutingDecision, RoutingPolicy};
pub use threat_sim::{compare_architectures, run_scenario, ArchitectureMode, ScenarioId, ThreatScenario};
pub use types::{AdapterId, DomainTag, DomainTaxonomy, PrincipalId, TaskId, Tier};
