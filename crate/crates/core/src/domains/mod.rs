//! Benchmark domains and the frozen case universe.

mod builder;
pub mod diagnosis;
pub mod etl;
pub mod navigation;
pub mod schedule;
pub mod travel;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::case::{Case, Domain, Regime, WitnessCase};
use crate::contracts::Edge;

pub use builder::{CaseDraft, Model, Script, SkeletonSpec};

/// Repeats per case in every aggregate.
pub const REPEAT: u32 = 5;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown case `{case}` in domain {domain}")]
pub struct UnknownCase {
    pub domain: Domain,
    pub case: String,
}

pub fn model(domain: Domain) -> Model {
    match domain {
        Domain::Navigation => navigation::model(),
        Domain::ScheduleForm => schedule::model(),
        Domain::Diagnosis => diagnosis::model(),
        Domain::EtlPipeline => etl::model(),
        Domain::TravelPlanning => travel::model(),
    }
}

/// Official cases first, then commit-sensitive ones.
pub fn cases(domain: Domain) -> Vec<Case> {
    let (official, sensitive) = match domain {
        Domain::Navigation => (navigation::official(), navigation::commit_sensitive()),
        Domain::ScheduleForm => (schedule::official(), schedule::commit_sensitive()),
        Domain::Diagnosis => (diagnosis::official(), diagnosis::commit_sensitive()),
        Domain::EtlPipeline => (etl::official(), etl::commit_sensitive()),
        Domain::TravelPlanning => (travel::official(), travel::commit_sensitive()),
    };
    official.into_iter().chain(sensitive).collect()
}

/// Every frozen case, in domain order.
pub fn universe() -> Vec<Case> {
    Domain::ALL.iter().flat_map(|d| cases(*d)).collect()
}

pub fn build_case(domain: Domain, case_id: &str) -> Result<Case, UnknownCase> {
    cases(domain)
        .into_iter()
        .find(|c| c.id == case_id)
        .ok_or_else(|| UnknownCase {
            domain,
            case: case_id.to_string(),
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniverseEntry {
    pub domain: Domain,
    pub case: String,
    pub regime: Regime,
    pub repeat: u32,
    pub scenario_hash: String,
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn enumerate_universe() -> Vec<UniverseEntry> {
    universe()
        .iter()
        .map(|c| UniverseEntry {
            domain: c.domain,
            case: c.id.clone(),
            regime: c.regime,
            repeat: REPEAT,
            scenario_hash: sha(c.scenario.to_json().as_bytes()),
        })
        .collect()
}

/// Content hash over the ordered entries and every domain config hash.
pub fn universe_hash(entries: &[UniverseEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        h.update(format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.domain, e.case, e.regime, e.repeat, e.scenario_hash
        ));
    }
    for d in Domain::ALL {
        h.update(format!("{}\t{}\n", d, model(*d).configs().hash()));
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniverseLock {
    pub format: u32,
    pub hash: String,
    pub cases: Vec<UniverseEntry>,
}

impl UniverseLock {
    pub fn current() -> Self {
        let cases = enumerate_universe();
        Self {
            format: 1,
            hash: universe_hash(&cases),
            cases,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lock serializes") + "\n"
    }
}

/// Committed-consumer witnesses, one per domain that has one.
pub fn witnesses() -> Vec<WitnessCase> {
    vec![
        navigation::witness(),
        schedule::witness(),
        diagnosis::witness(),
        etl::witness(),
    ]
}

/// A legal but unreviewed edge paired with a reviewed exit of the same skeleton.
#[derive(Debug, Clone)]
pub struct WrongBoundary {
    pub domain: Domain,
    pub wrong_edge: Edge,
    pub variant: Case,
    /// Position of the step that takes the wrong edge.
    pub skip_seq: u64,
    pub reviewed_edge: Edge,
    pub control: Case,
}

pub fn wrong_boundaries() -> Vec<WrongBoundary> {
    let (nav, nav_skip) = navigation::wrong_boundary_variant();
    let (sched, sched_skip) = schedule::wrong_boundary_variant();
    vec![
        WrongBoundary {
            domain: Domain::Navigation,
            wrong_edge: Edge::new("WAITING_POI_SELECTION", "STOP_READY"),
            variant: nav,
            skip_seq: nav_skip,
            reviewed_edge: Edge::new("WAITING_QUERY_REFINEMENT", "STOP_READY"),
            control: navigation::wrong_boundary_control(),
        },
        WrongBoundary {
            domain: Domain::ScheduleForm,
            wrong_edge: Edge::new("WAITING_SLOT_SELECTION", "SLOT_READY"),
            variant: sched,
            skip_seq: sched_skip,
            reviewed_edge: Edge::new("WAITING_SLOT_REFINEMENT", "SLOT_READY"),
            control: schedule::wrong_boundary_control(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn universe_shape() {
        let entries = enumerate_universe();
        assert_eq!(entries.len(), 54);
        assert_eq!(entries.iter().map(|e| e.repeat as usize).sum::<usize>(), 270);
        let ids: BTreeSet<_> = entries.iter().map(|e| e.case.as_str()).collect();
        assert_eq!(ids.len(), 54);
        let count = |d: Domain, r: Regime| entries.iter().filter(|e| e.domain == d && e.regime == r).count();
        let expected = [
            (Domain::Navigation, 4, 8),
            (Domain::ScheduleForm, 4, 7),
            (Domain::Diagnosis, 4, 6),
            (Domain::EtlPipeline, 7, 7),
            (Domain::TravelPlanning, 4, 3),
        ];
        for (d, off, cs) in expected {
            assert_eq!(count(d, Regime::Official), off, "{d}");
            assert_eq!(count(d, Regime::CommitSensitive), cs, "{d}");
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = UniverseLock::current();
        assert_eq!(a, UniverseLock::current());
        let mut entries = a.cases.clone();
        entries.pop();
        assert_ne!(universe_hash(&entries), a.hash);
    }

    #[test]
    fn regime_witness_holds() {
        use crate::contracts::EffectClass;
        use crate::controllers::run_to_failure;
        use crate::gate::committed_conflict;
        use crate::sidecar::SnapshotMode;
        for case in universe() {
            let failed = run_to_failure(&case, &case.site, SnapshotMode::RegistryOnly).unwrap();
            let id = failed.failed_instance().expect("localized").clone();
            let sidecar = &failed.runtime.sidecar;
            let entry = sidecar.instance(&id).unwrap().activated_at;
            let consumer = committed_conflict(&id, sidecar).0;
            let durable = failed
                .runtime
                .effects
                .iter()
                .any(|e| e.seq >= entry && e.class == EffectClass::Irreversible);
            match case.regime {
                Regime::CommitSensitive => assert!(consumer || durable, "{}", case.id),
                Regime::Official => assert!(!consumer && !durable, "{}", case.id),
            }
        }
    }

    #[test]
    fn unknown_case_is_reported() {
        let err = build_case(Domain::Diagnosis, "nope").unwrap_err();
        assert_eq!(err.case, "nope");
        assert!(build_case(Domain::Diagnosis, "diagnosis-cs-01").is_ok());
    }
}

#[cfg(test)]
pub(crate) mod check {
    use crate::case::{Case, ControllerKind, Regime, Status, WitnessCase};
    use crate::controllers::{golden_run, recover, run_to_failure};
    use crate::gate::GateOptions;
    use crate::sidecar::SnapshotMode;

    /// Frozen expectations every domain case must satisfy.
    pub fn case_contract(case: &Case) {
        case.scenario.validate().unwrap_or_else(|e| panic!("{}: {e}", case.id));
        let golden = golden_run(case, SnapshotMode::RegistryOnly).unwrap();
        assert!(
            case.goal_holds(golden.agent.current_state(), golden.agent.memory()),
            "{}: golden run misses the goal",
            case.id
        );
        let failed = run_to_failure(case, &case.site, SnapshotMode::RegistryOnly).unwrap();
        assert_eq!(
            failed.failed_instance(),
            Some(&case.expected.instance),
            "{}: localization",
            case.id
        );
        let frozen = recover(ControllerKind::CompFrozen, case, &failed, GateOptions::default()).unwrap();
        let picked = frozen
            .restored_checkpoint
            .as_deref()
            .and_then(|id| failed.runtime.sidecar.checkpoint(id))
            .map(|c| c.lifecycle);
        assert_eq!(picked, case.expected.checkpoint, "{}: frozen scope", case.id);
        assert_eq!(frozen.status, Status::Ok, "{}: frozen status", case.id);
        let entry = recover(ControllerKind::CompEntryOnly, case, &failed, GateOptions::default()).unwrap();
        match case.regime {
            Regime::Official => assert_eq!(entry.status, Status::Ok, "{}: entry status", case.id),
            Regime::CommitSensitive => {
                assert_eq!(Some(entry.status), case.entry_flavor, "{}: entry status", case.id);
            }
        }
        let retry = recover(ControllerKind::RetryOnly, case, &failed, GateOptions::default()).unwrap();
        assert_eq!(retry.status, Status::Ok, "{}: retry status", case.id);
        assert!(
            frozen.replay_trace.len() < retry.replay_trace.len(),
            "{}: frozen replays less",
            case.id
        );
    }

    /// Guard on: blocked on a committed consumer. Guard off: drops the
    /// declared consumers and misses the contract.
    pub fn witness_contract(w: &WitnessCase) {
        let case = &w.case;
        let failed = run_to_failure(case, &case.site, SnapshotMode::RegistryOnly).unwrap();
        let on = recover(ControllerKind::CompFrozen, case, &failed, GateOptions::default()).unwrap();
        assert_eq!(on.status, Status::Blocked, "{}", case.id);
        let off = GateOptions {
            consumer_guard: false,
            ..GateOptions::default()
        };
        let off = recover(ControllerKind::CompFrozen, case, &failed, off).unwrap();
        assert_eq!(off.dropped_consumers.len(), w.expected_dropped, "{}", case.id);
        assert_eq!(off.status, Status::Contract, "{}", case.id);
    }
}
