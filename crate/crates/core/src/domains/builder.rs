//! Compact builders for domain models, configs and scripts.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::case::{Case, Domain, ExpectedScope, Regime, Status};
use crate::contracts::{
    ConfigDocument, ConfigSet, Edge, EffectClass, EffectRule, ExitDecl, Manifest, Predicate, SkeletonDecl,
};
use crate::engine::{FailureSignal, Key, Transition, Value};
use crate::scenario::{Emission, FailureSite, Scenario, ScriptedAction, SCENARIO_FORMAT};
use crate::sidecar::{InstanceId, Lifecycle};

pub(crate) fn set<I, S>(items: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    items.into_iter().map(Into::into).collect()
}

/// FSM shape and manifest shared by every case of a domain.
#[derive(Debug, Clone, Default)]
pub struct Model {
    pub initial_state: String,
    pub states: BTreeSet<String>,
    pub transitions: BTreeSet<Transition>,
    pub memory_keys: BTreeSet<Key>,
    pub entities: BTreeSet<String>,
    pub effects: BTreeMap<String, EffectRule>,
    pub predicates: BTreeMap<String, Predicate>,
    pub skeletons: Vec<SkeletonDecl>,
}

impl Model {
    pub fn new(initial: &str) -> Self {
        Self {
            initial_state: initial.into(),
            ..Self::default()
        }
    }

    pub fn states(&mut self, states: &[&str]) -> &mut Self {
        self.states.extend(states.iter().map(|s| s.to_string()));
        self
    }

    pub fn edge(&mut self, from: &str, action: &str, to: &str) -> &mut Self {
        self.transitions.insert(Transition::new(from, action, to));
        self
    }

    pub fn keys<I, S>(&mut self, keys: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.memory_keys.extend(keys.into_iter().map(Into::into));
        self
    }

    /// Declare `entity` plus one memory key per field.
    pub fn entity(&mut self, entity: &str, fields: &[&str]) -> &mut Self {
        self.entities.insert(entity.into());
        for f in fields {
            self.memory_keys.insert(format!("{entity}.{f}"));
        }
        self
    }

    pub fn effect(&mut self, tag: &str, class: EffectClass, compensation: Option<&str>) -> &mut Self {
        self.effects.insert(
            tag.into(),
            EffectRule {
                class,
                compensation: compensation.map(str::to_string),
            },
        );
        self
    }

    pub fn predicate(&mut self, name: &str, p: Predicate) -> &mut Self {
        self.predicates.insert(name.into(), p);
        self
    }

    pub fn skeleton(&mut self, decl: SkeletonDecl) -> &mut Self {
        self.skeletons.push(decl);
        self
    }

    pub fn actions(&self) -> BTreeSet<String> {
        self.transitions.iter().map(|t| t.action.clone()).collect()
    }

    pub fn config_document(&self) -> ConfigDocument {
        let mut actions = self.actions();
        actions.extend(self.effects.values().filter_map(|r| r.compensation.clone()));
        ConfigDocument {
            format: 1,
            manifest: Manifest {
                states: self.states.clone(),
                actions,
                memory_keys: self.memory_keys.clone(),
                entities: self.entities.clone(),
                effect_tags: self.effects.keys().cloned().collect(),
            },
            skeletons: self.skeletons.clone(),
            predicates: self.predicates.clone(),
            effects: self.effects.clone(),
        }
    }

    pub fn configs(&self) -> Arc<ConfigSet> {
        Arc::new(ConfigSet::from_document(&self.config_document()).expect("domain config is valid"))
    }

    pub fn scenario(&self, name: &str, script: Script, site: Option<FailureSite>) -> Scenario {
        let mut actions = self.actions();
        actions.extend(self.effects.values().filter_map(|r| r.compensation.clone()));
        Scenario {
            format: SCENARIO_FORMAT,
            name: name.into(),
            states: self.states.clone(),
            initial_state: self.initial_state.clone(),
            actions,
            transitions: self.transitions.clone(),
            memory_keys: self.memory_keys.clone(),
            initial_memory: BTreeMap::new(),
            script: script.steps,
            failure_sites: site.into_iter().collect(),
        }
    }
}

pub struct SkeletonSpec<'a> {
    pub id: &'a str,
    pub internal: &'a [&'a str],
    pub entry: &'a [&'a str],
    pub commit: &'a [&'a str],
    pub exits: &'a [(&'a str, &'a str, &'a str)],
    pub pending: &'a [(&'a str, &'a str)],
    pub inputs: &'a [&'a str],
    pub outputs: &'a [&'a str],
    pub effects: &'a [&'a str],
}

impl SkeletonSpec<'_> {
    pub fn build(&self) -> SkeletonDecl {
        SkeletonDecl {
            id: self.id.into(),
            internal_states: set(self.internal.iter().copied()),
            entry_states: set(self.entry.iter().copied()),
            commit: self.commit.iter().map(|s| s.to_string()).collect(),
            exits: self
                .exits
                .iter()
                .map(|(from, to, p)| ExitDecl {
                    from: from.to_string(),
                    to: to.to_string(),
                    predicate: p.to_string(),
                })
                .collect(),
            pending: self.pending.iter().map(|(f, t)| Edge::new(f, t)).collect(),
            input_keys: set(self.inputs.iter().copied()),
            output_keys: set(self.outputs.iter().copied()),
            effect_tags: set(self.effects.iter().copied()),
        }
    }
}

/// Ordered action script. Steps default to explicit empty read/write
/// annotations; touched keys are always added to the write set.
#[derive(Debug, Clone, Default)]
pub struct Script {
    pub steps: Vec<ScriptedAction>,
}

pub struct StepMut<'a>(&'a mut ScriptedAction);

impl Script {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> u64 {
        self.steps.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&mut self, action: &str, entity: &str) -> StepMut<'_> {
        self.steps.push(ScriptedAction {
            action: action.into(),
            to: None,
            entity: entity.into(),
            effect: BTreeMap::new(),
            reads: Some(BTreeSet::new()),
            writes: Some(BTreeSet::new()),
            emits: None,
            cost: 1,
        });
        StepMut(self.steps.last_mut().expect("just pushed"))
    }

    /// Position of the last step named `action` for `entity`.
    pub fn find_last(&self, action: &str, entity: &str) -> u64 {
        self.steps
            .iter()
            .rposition(|s| s.action == action && s.entity == entity)
            .unwrap_or_else(|| panic!("no {action} for {entity}")) as u64
    }
}

impl StepMut<'_> {
    pub fn set(self, key: &str, value: impl Into<Value>) -> Self {
        self.0.effect.insert(key.into(), Some(value.into()));
        self
    }

    pub fn read(self, keys: &[&str]) -> Self {
        self.0
            .reads
            .get_or_insert_with(BTreeSet::new)
            .extend(keys.iter().map(|k| k.to_string()));
        self
    }

    /// Drop annotations so the sidecar assumes the full interface.
    pub fn unannotated(self) -> Self {
        self.0.reads = None;
        self.0.writes = None;
        self
    }

    pub fn emit(self, tag: &str, payload: impl Into<Value>) -> Self {
        self.0.emits = Some(Emission {
            tag: tag.into(),
            payload: payload.into(),
        });
        self
    }

    pub fn cost(self, cost: u32) -> Self {
        self.0.cost = cost;
        self
    }
}

pub fn site(script: &Script, seq: u64) -> FailureSite {
    FailureSite {
        seq,
        action: script.steps[seq as usize].action.clone(),
        signal: FailureSignal::ToolException,
    }
}

/// Everything needed to assemble a [`Case`] from a script.
pub struct CaseDraft<'a> {
    pub model: &'a Model,
    pub configs: &'a Arc<ConfigSet>,
    pub domain: Domain,
    pub id: String,
    pub regime: Regime,
    pub script: Script,
    pub fail_at: u64,
    pub extra: Vec<u64>,
    pub coarse_anchor: &'a str,
    pub entry_flavor: Option<Status>,
    pub goal: Predicate,
    pub golden_keys: BTreeSet<Key>,
    pub expected: (InstanceId, Option<Lifecycle>),
}

impl CaseDraft<'_> {
    pub fn build(self) -> Case {
        let primary = site(&self.script, self.fail_at);
        let extra_sites = self.extra.iter().map(|s| site(&self.script, *s)).collect();
        let scenario = self.model.scenario(&self.id, self.script, Some(primary.clone()));
        Case {
            id: self.id,
            domain: self.domain,
            regime: self.regime,
            scenario,
            configs: self.configs.clone(),
            site: primary,
            extra_sites,
            coarse_anchor: self.coarse_anchor.into(),
            fallback_allowed: false,
            entry_flavor: self.entry_flavor,
            goal: self.goal,
            golden_keys: self.golden_keys,
            expected: ExpectedScope {
                instance: self.expected.0,
                checkpoint: self.expected.1,
            },
        }
    }
}
