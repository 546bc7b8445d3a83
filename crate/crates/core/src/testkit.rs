//! Small two-skeleton fixture shared by unit tests.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::contracts::{
    ConfigDocument, ConfigSet, EffectClass, EffectRule, ExitDecl, Manifest, Predicate, SkeletonDecl,
};
use crate::engine::{Effect, Transition, Value};
use crate::scenario::{Emission, Scenario, ScriptedAction};

fn set(items: &[&str]) -> std::collections::BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn step(action: &str, entity: &str, effect: &[(&str, Option<Value>)]) -> ScriptedAction {
    let effect: Effect = effect.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    ScriptedAction {
        action: action.into(),
        to: None,
        entity: entity.into(),
        effect,
        reads: None,
        writes: None,
        emits: None,
        cost: 1,
    }
}

/// Pick two items, then assemble a bundle that reads both and sends it.
pub fn scenario() -> Scenario {
    let transitions = [
        ("IDLE", "open", "PICKING"),
        ("PICKING", "pick", "PICKED"),
        ("PICKED", "close", "READY"),
        ("READY", "open", "PICKING"),
        ("READY", "assemble", "ASSEMBLING"),
        ("ASSEMBLING", "send", "ASSEMBLING"),
        ("ASSEMBLING", "build", "ASSEMBLING"),
        ("ASSEMBLING", "finish", "DONE"),
        ("PICKED", "assemble", "ASSEMBLING"),
        ("ASSEMBLING", "resume", "PICKED"),
    ]
    .iter()
    .map(|(f, a, t)| Transition::new(f, a, t))
    .collect();
    let mut script = vec![
        step("open", "item[0]", &[("request", Some("two".into()))]),
        step("pick", "item[0]", &[("item[0].value", Some("apple".into()))]),
        step("close", "item[0]", &[]),
        step("open", "item[1]", &[]),
        step("pick", "item[1]", &[("item[1].value", Some("pear".into()))]),
        step("close", "item[1]", &[]),
        step("assemble", "bundle", &[]),
        step("send", "bundle", &[("sent", Some(true.into()))]),
        step("build", "bundle", &[("bundle", Some("apple+pear".into()))]),
        step("finish", "bundle", &[]),
    ];
    script[6].reads = Some(set(&["item[0].value", "item[1].value"]));
    script[6].writes = Some(set(&[]));
    script[7].emits = Some(Emission {
        tag: "send".into(),
        payload: "apple+pear".into(),
    });
    Scenario {
        format: 1,
        name: "fixture".into(),
        states: set(&["IDLE", "PICKING", "PICKED", "READY", "ASSEMBLING", "DONE"]),
        initial_state: "IDLE".into(),
        actions: set(&["open", "pick", "close", "assemble", "send", "build", "finish", "resume"]),
        transitions,
        memory_keys: set(&["request", "item[0].value", "item[1].value", "bundle", "sent"]),
        initial_memory: BTreeMap::new(),
        script,
        failure_sites: vec![],
    }
}

/// Bundle assembled and committed while item[0] is parked in PICKED,
/// then the agent resumes item[0].
pub fn interleaved() -> Scenario {
    let mut s = scenario();
    let mut assemble = step("assemble", "bundle", &[]);
    assemble.reads = Some(set(&["item[0].value"]));
    assemble.writes = Some(set(&[]));
    s.script = vec![
        step("open", "item[0]", &[("request", Some("one".into()))]),
        step("pick", "item[0]", &[("item[0].value", Some("apple".into()))]),
        assemble,
        step("build", "bundle", &[("bundle", Some("apple".into()))]),
        step("resume", "item[0]", &[]),
        step("close", "item[0]", &[]),
    ];
    s
}

pub fn config_document() -> ConfigDocument {
    let mut predicates = BTreeMap::new();
    predicates.insert(
        "picked".to_string(),
        Predicate::all(vec![Predicate::state("PICKED"), Predicate::present(["{entity}.value"])]),
    );
    predicates.insert("handoff".to_string(), Predicate::present(["{entity}.value"]));
    predicates.insert(
        "built".to_string(),
        Predicate::all(vec![Predicate::state("ASSEMBLING"), Predicate::present(["bundle"])]),
    );
    let mut effects = BTreeMap::new();
    effects.insert(
        "send".to_string(),
        EffectRule {
            class: EffectClass::Irreversible,
            compensation: None,
        },
    );
    ConfigDocument {
        format: 1,
        manifest: Manifest {
            states: set(&["IDLE", "PICKING", "PICKED", "READY", "ASSEMBLING", "DONE"]),
            actions: set(&["open", "pick", "close", "assemble", "send", "build", "finish", "resume"]),
            memory_keys: set(&["request", "item[0].value", "item[1].value", "bundle", "sent"]),
            entities: set(&["item[0]", "item[1]", "bundle"]),
            effect_tags: set(&["send"]),
        },
        skeletons: vec![
            SkeletonDecl {
                id: "Pick".into(),
                internal_states: set(&["PICKING", "PICKED"]),
                entry_states: set(&["PICKING"]),
                commit: vec!["picked".into()],
                exits: vec![ExitDecl {
                    from: "PICKED".into(),
                    to: "READY".into(),
                    predicate: "handoff".into(),
                }],
                pending: vec![],
                input_keys: set(&["request"]),
                output_keys: set(&["{entity}.value"]),
                effect_tags: set(&[]),
            },
            SkeletonDecl {
                id: "Assemble".into(),
                internal_states: set(&["ASSEMBLING"]),
                entry_states: set(&["ASSEMBLING"]),
                commit: vec!["built".into()],
                exits: vec![],
                pending: vec![],
                input_keys: set(&["item[0].value", "item[1].value"]),
                output_keys: set(&["bundle", "sent"]),
                effect_tags: set(&["send"]),
            },
        ],
        predicates,
        effects,
    }
}

pub fn configs() -> Arc<ConfigSet> {
    Arc::new(ConfigSet::from_document(&config_document()).expect("fixture config loads"))
}

pub fn case_for(scenario: Scenario, site_seq: u64) -> crate::case::Case {
    use crate::case::{Case, Domain, ExpectedScope, Regime};
    use crate::engine::FailureSignal;
    use crate::scenario::FailureSite;
    let action = scenario.script[site_seq as usize].action.clone();
    let entity = scenario.script[site_seq as usize].entity.clone();
    Case {
        id: "fixture".into(),
        domain: Domain::Diagnosis,
        regime: Regime::Official,
        site: FailureSite {
            seq: site_seq,
            action,
            signal: FailureSignal::ToolException,
        },
        scenario,
        configs: configs(),
        extra_sites: vec![],
        coarse_anchor: "READY".into(),
        fallback_allowed: false,
        entry_flavor: None,
        goal: Predicate::present(["item[0].value"]),
        golden_keys: set(&["item[0].value", "bundle"]),
        expected: ExpectedScope {
            instance: crate::sidecar::InstanceId::new("Pick", &entity, 0),
            checkpoint: None,
        },
    }
}
