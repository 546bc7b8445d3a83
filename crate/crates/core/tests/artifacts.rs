//! Checked-in universe files must match what the code builds.

use std::path::PathBuf;

use semrec::domains::{self, UniverseLock};
use semrec::{load_configs, Domain, Scenario};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn universe_lock_is_current() {
    let text = std::fs::read_to_string(root().join("universe.lock")).expect("universe.lock");
    let stored: UniverseLock = serde_json::from_str(&text).unwrap();
    assert_eq!(stored, UniverseLock::current(), "run `semrec export-cases --out .`");
    assert_eq!(text, stored.to_json());
}

#[test]
fn config_files_match_models() {
    for d in Domain::ALL {
        let text = std::fs::read_to_string(root().join(format!("configs/{d}.json"))).unwrap();
        let loaded = load_configs(&text).unwrap();
        assert_eq!(loaded.hash(), domains::model(*d).configs().hash(), "{d}");
    }
}

#[test]
fn case_files_match_scenarios() {
    for case in domains::universe() {
        let path = root().join(format!("cases/{}/{}.json", case.domain, case.id));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("{}", path.display()));
        let scenario = Scenario::from_json(&text).unwrap();
        assert_eq!(scenario, case.scenario, "{}", case.id);
    }
}
