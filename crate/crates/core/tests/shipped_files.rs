use std::path::PathBuf;

use sovgate::threat_sim::{ThreatScenario, DEFAULT_COUNT, DEFAULT_SEED};
use sovgate::{Gateway, GatewayConfig};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn scenario_directory_matches_builtins() {
    let dir = root().join("scenarios");
    let suite = ThreatScenario::builtin_suite(DEFAULT_SEED, DEFAULT_COUNT);
    let on_disk = std::fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "toml"));
    assert_eq!(on_disk.count(), suite.len());
    for s in suite {
        let text = std::fs::read_to_string(dir.join(s.file_name())).unwrap();
        assert_eq!(text, s.to_toml(), "{}", s.file_name());
    }
}

#[test]
fn sample_config_boots() {
    let mut cfg = GatewayConfig::load(&root().join("config/gateway.toml")).unwrap();
    cfg.audit_log = None;
    let gw = Gateway::from_config(&cfg).unwrap();
    assert!(gw.principals().get(&"admin".into()).unwrap().admin);
}
