use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::adapters::{AdapterDescriptor, Availability, PayloadDialect, SupplierBehaviorScript};
use crate::authority::DEFAULT_MAX_LEVEL;
use crate::types::DomainTaxonomy;

/// Gateway configuration, read from TOML. Relative paths resolve against
/// the directory of the configuration file.
///
/// ```toml
/// taxonomy = ["summarization", "anomaly_detection"]
/// sources = "sources.txt"
/// routing_policy = "routing.toml"
/// ruleset = "rules.policy"
/// principals = "principals.txt"
/// adapters = "adapters.toml"
/// max_escalation_level = 3
/// listen = "127.0.0.1:8480"
/// audit_log = "audit.ndjson"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_taxonomy")]
    pub taxonomy: Vec<String>,
    pub sources: PathBuf,
    pub routing_policy: PathBuf,
    pub ruleset: PathBuf,
    pub principals: PathBuf,
    pub adapters: PathBuf,
    #[serde(default = "default_max_level")]
    pub max_escalation_level: u8,
    #[serde(default = "default_listen")]
    pub listen: String,
    /// In-memory log when absent.
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
    /// Pending items older than this many clock ticks expire upward. The
    /// served gateway ticks in microseconds.
    #[serde(default)]
    pub review_timeout: Option<u64>,
    #[serde(default)]
    pub staleness_limit: Option<u64>,
}

fn default_taxonomy() -> Vec<String> {
    DomainTaxonomy::default().iter().map(|d| d.as_str().to_owned()).collect()
}

fn default_max_level() -> u8 {
    DEFAULT_MAX_LEVEL
}

fn default_listen() -> String {
    "127.0.0.1:8480".into()
}

/// One simulated supplier, with its initial pin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSpec {
    pub adapter_id: String,
    pub supplier_name: String,
    pub advertised_version: String,
    pub certified_domains: Vec<String>,
    #[serde(default)]
    pub dialect: PayloadDialect,
    #[serde(default)]
    pub availability: Option<Availability>,
    pub model_seed: u64,
    /// Pinned at boot when set.
    #[serde(default)]
    pub pin: Option<String>,
    #[serde(default)]
    pub script: SupplierBehaviorScript,
}

impl AdapterSpec {
    pub fn descriptor(&self) -> AdapterDescriptor {
        let mut d = AdapterDescriptor::new(
            &self.adapter_id,
            &self.supplier_name,
            &self.advertised_version,
            self.certified_domains.iter().map(String::as_str),
        )
        .with_dialect(self.dialect);
        if let Some(a) = self.availability {
            d.availability = a;
        }
        d
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterFile {
    #[serde(default)]
    pub adapter: Vec<AdapterSpec>,
}

impl AdapterFile {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::Config(format!("adapters: {e}")))
    }
}

const ENV_PREFIX: &str = "SOVGATE_";

impl GatewayConfig {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.sources);
        fix(&mut self.routing_policy);
        fix(&mut self.ruleset);
        fix(&mut self.principals);
        fix(&mut self.adapters);
        if let Some(p) = self.audit_log.as_mut() {
            fix(p);
        }
    }

    /// Applies `SOVGATE_LISTEN`, `SOVGATE_AUDIT_LOG`, `SOVGATE_MAX_ESCALATION_LEVEL`
    /// and `SOVGATE_REVIEW_TIMEOUT` from the given environment.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), GatewayError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let v = v.as_ref();
            let bad = || GatewayError::Config(format!("{ENV_PREFIX}{key}: invalid value `{v}`"));
            match key {
                "LISTEN" => self.listen = v.to_owned(),
                "AUDIT_LOG" => self.audit_log = Some(PathBuf::from(v)),
                "MAX_ESCALATION_LEVEL" => self.max_escalation_level = v.parse().map_err(|_| bad())?,
                "REVIEW_TIMEOUT" => self.review_timeout = Some(v.parse().map_err(|_| bad())?),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> DomainTaxonomy {
        DomainTaxonomy::new(self.taxonomy.iter().map(String::as_str))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
sources = "s.txt"
routing_policy = "r.toml"
ruleset = "rules.policy"
principals = "p.txt"
adapters = "a.toml"
"#;

    #[test]
    fn defaults_and_path_resolution() {
        let mut cfg = GatewayConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.max_escalation_level, 3);
        assert_eq!(cfg.taxonomy.len(), 4);
        cfg.resolve_paths(Path::new("/etc/sovgate"));
        assert_eq!(cfg.ruleset, PathBuf::from("/etc/sovgate/rules.policy"));
    }

    #[test]
    fn env_overrides() {
        let mut cfg = GatewayConfig::parse(MINIMAL).unwrap();
        cfg.apply_env([("SOVGATE_LISTEN", "0.0.0.0:9000"), ("SOVGATE_MAX_ESCALATION_LEVEL", "2"), ("HOME", "/root")])
            .unwrap();
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.max_escalation_level, 2);
        assert!(cfg.apply_env([("SOVGATE_REVIEW_TIMEOUT", "soon")]).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(GatewayConfig::parse(&format!("{MINIMAL}\nlisten_port = 1\n")).is_err());
    }
}
