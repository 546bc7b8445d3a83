//! Frozen, reviewed skeleton configurations.
//!
//! A configuration document declares a manifest (states, actions, memory
//! keys, entities, effect tags), a table of named predicates, the effect
//! classes, and one recovery contract per skeleton. Keys may contain the
//! `{entity}` placeholder; it is bound to the instance entity at evaluation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{Key, Memory, StateId, Value};

pub const CONFIG_FORMAT: u32 = 1;
const ENTITY_PLACEHOLDER: &str = "{entity}";

pub fn bind_key(key: &str, entity: &str) -> Key {
    key.replace(ENTITY_PLACEHOLDER, entity)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    StateReached { states: BTreeSet<StateId> },
    KeysPresent { keys: BTreeSet<Key> },
    KeysEqual { key: Key, value: Value },
    Conjunction { children: Vec<Predicate> },
}

impl Predicate {
    pub fn state(s: &str) -> Self {
        Predicate::StateReached {
            states: [s.to_string()].into_iter().collect(),
        }
    }

    pub fn present<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Predicate::KeysPresent {
            keys: keys.into_iter().map(Into::into).collect(),
        }
    }

    pub fn equal(key: &str, value: impl Into<Value>) -> Self {
        Predicate::KeysEqual {
            key: key.to_string(),
            value: value.into(),
        }
    }

    pub fn all(children: Vec<Predicate>) -> Self {
        Predicate::Conjunction { children }
    }

    /// Total and pure. `entity` binds `{entity}` in key names.
    pub fn evaluate(&self, state: &str, memory: &Memory, entity: &str) -> bool {
        match self {
            Predicate::StateReached { states } => states.contains(state),
            Predicate::KeysPresent { keys } => keys.iter().all(|k| memory.contains_key(&bind_key(k, entity))),
            Predicate::KeysEqual { key, value } => memory.get(&bind_key(key, entity)) == Some(value),
            Predicate::Conjunction { children } => children.iter().all(|c| c.evaluate(state, memory, entity)),
        }
    }

    fn visit<'a>(&'a self, states: &mut Vec<&'a StateId>, keys: &mut Vec<&'a Key>) {
        match self {
            Predicate::StateReached { states: s } => states.extend(s.iter()),
            Predicate::KeysPresent { keys: k } => keys.extend(k.iter()),
            Predicate::KeysEqual { key, .. } => keys.push(key),
            Predicate::Conjunction { children } => {
                for c in children {
                    c.visit(states, keys);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectClass {
    Reversible,
    Compensable,
    Irreversible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectRule {
    pub class: EffectClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: StateId,
    pub to: StateId,
}

impl Edge {
    pub fn new(from: &str, to: &str) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl std::fmt::Display for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedPredicate {
    pub name: String,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitBoundary {
    pub from: StateId,
    pub to: StateId,
    pub predicate: NamedPredicate,
}

impl ExitBoundary {
    pub fn edge(&self) -> Edge {
        Edge::new(&self.from, &self.to)
    }
}

/// The resolved, frozen recovery contract of one skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonConfig {
    pub skeleton_id: String,
    pub internal_states: BTreeSet<StateId>,
    pub entry_states: BTreeSet<StateId>,
    /// Reviewed commit predicates; the commit point is reached when any holds.
    pub commit_predicates: Vec<NamedPredicate>,
    pub exits: Vec<ExitBoundary>,
    /// Boundaries under review: present in the config, never certifiable.
    pub pending: Vec<Edge>,
    pub input_keys: BTreeSet<Key>,
    pub output_keys: BTreeSet<Key>,
    pub effect_policy: BTreeMap<String, EffectRule>,
}

impl SkeletonConfig {
    pub fn commit_holds(&self, state: &str, memory: &Memory, entity: &str) -> bool {
        self.commit_predicates
            .iter()
            .any(|p| p.predicate.evaluate(state, memory, entity))
    }

    pub fn exit_for(&self, from: &str, to: &str) -> Option<&ExitBoundary> {
        self.exits.iter().find(|e| e.from == from && e.to == to)
    }

    pub fn input_keys_for(&self, entity: &str) -> BTreeSet<Key> {
        self.input_keys.iter().map(|k| bind_key(k, entity)).collect()
    }

    pub fn output_keys_for(&self, entity: &str) -> BTreeSet<Key> {
        self.output_keys.iter().map(|k| bind_key(k, entity)).collect()
    }

    pub fn interface_for(&self, entity: &str) -> BTreeSet<Key> {
        let mut keys = self.input_keys_for(entity);
        keys.extend(self.output_keys_for(entity));
        keys
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub states: BTreeSet<StateId>,
    pub actions: BTreeSet<String>,
    pub memory_keys: BTreeSet<Key>,
    #[serde(default)]
    pub entities: BTreeSet<String>,
    #[serde(default)]
    pub effect_tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitDecl {
    pub from: StateId,
    pub to: StateId,
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonDecl {
    pub id: String,
    pub internal_states: BTreeSet<StateId>,
    pub entry_states: BTreeSet<StateId>,
    pub commit: Vec<String>,
    pub exits: Vec<ExitDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pending: Vec<Edge>,
    pub input_keys: BTreeSet<Key>,
    pub output_keys: BTreeSet<Key>,
    #[serde(default)]
    pub effect_tags: BTreeSet<String>,
}

/// On-disk boundary configuration document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub format: u32,
    pub manifest: Manifest,
    pub skeletons: Vec<SkeletonDecl>,
    pub predicates: BTreeMap<String, Predicate>,
    pub effects: BTreeMap<String, EffectRule>,
}

impl ConfigDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported config format {0}")]
    Format(u32),
    #[error("unknown state {state} in skeleton {skeleton}")]
    UnknownState { skeleton: String, state: StateId },
    #[error("unknown key {key} in skeleton {skeleton}")]
    UnknownKey { skeleton: String, key: Key },
    #[error("duplicate skeleton {0}")]
    DuplicateSkeleton(String),
    #[error("skeleton {skeleton} uses effect tag {tag} with no policy entry")]
    MissingEffectPolicy { skeleton: String, tag: String },
    #[error("skeleton {skeleton} references undefined predicate {name}")]
    UnknownPredicate { skeleton: String, name: String },
    #[error("entry state {state} of {skeleton} is not internal")]
    EntryNotInternal { skeleton: String, state: StateId },
}

/// A validated, immutable set of skeleton configurations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigSet {
    manifest: Manifest,
    configs: BTreeMap<String, SkeletonConfig>,
    hash: String,
}

pub fn load_configs(document: &str) -> Result<ConfigSet, ConfigError> {
    let doc: ConfigDocument = serde_json::from_str(document).map_err(|e| ConfigError::Parse(e.to_string()))?;
    ConfigSet::from_document(&doc)
}

impl ConfigSet {
    pub fn from_document(doc: &ConfigDocument) -> Result<Self, ConfigError> {
        if doc.format != CONFIG_FORMAT {
            return Err(ConfigError::Format(doc.format));
        }
        let manifest = &doc.manifest;
        let mut configs = BTreeMap::new();
        for decl in &doc.skeletons {
            let config = resolve_skeleton(decl, doc)?;
            validate_references(&config, manifest)?;
            if configs.insert(decl.id.clone(), config).is_some() {
                return Err(ConfigError::DuplicateSkeleton(decl.id.clone()));
            }
        }
        let hash = content_hash(manifest, &configs);
        Ok(Self {
            manifest: manifest.clone(),
            configs,
            hash,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn get(&self, skeleton: &str) -> Option<&SkeletonConfig> {
        self.configs.get(skeleton)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SkeletonConfig> {
        self.configs.values()
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Hash recorded at load time.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Recompute the content hash; differs from [`Self::hash`] iff the set changed.
    pub fn recompute_hash(&self) -> String {
        content_hash(&self.manifest, &self.configs)
    }

    /// Skeletons whose internal states contain `state`.
    pub fn skeletons_covering(&self, state: &str) -> Vec<&SkeletonConfig> {
        self.configs
            .values()
            .filter(|c| c.internal_states.contains(state))
            .collect()
    }

    pub fn commit_predicate_count(&self) -> usize {
        self.configs.values().map(|c| c.commit_predicates.len()).sum()
    }

    pub fn exit_predicate_count(&self) -> usize {
        self.configs.values().map(|c| c.exits.len()).sum()
    }

    pub fn pending_count(&self) -> usize {
        self.configs.values().map(|c| c.pending.len()).sum()
    }

    pub fn effect_rule(&self, skeleton: &str, tag: &str) -> Option<&EffectRule> {
        self.configs.get(skeleton)?.effect_policy.get(tag)
    }
}

fn resolve_skeleton(decl: &SkeletonDecl, doc: &ConfigDocument) -> Result<SkeletonConfig, ConfigError> {
    let named = |name: &str| -> Result<NamedPredicate, ConfigError> {
        doc.predicates
            .get(name)
            .map(|p| NamedPredicate {
                name: name.to_string(),
                predicate: p.clone(),
            })
            .ok_or_else(|| ConfigError::UnknownPredicate {
                skeleton: decl.id.clone(),
                name: name.to_string(),
            })
    };
    let commit_predicates = decl.commit.iter().map(|n| named(n)).collect::<Result<Vec<_>, _>>()?;
    let exits = decl
        .exits
        .iter()
        .map(|e| {
            Ok(ExitBoundary {
                from: e.from.clone(),
                to: e.to.clone(),
                predicate: named(&e.predicate)?,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let mut effect_policy = BTreeMap::new();
    for tag in &decl.effect_tags {
        let rule = doc
            .effects
            .get(tag)
            .filter(|_| doc.manifest.effect_tags.contains(tag))
            .ok_or_else(|| ConfigError::MissingEffectPolicy {
                skeleton: decl.id.clone(),
                tag: tag.clone(),
            })?;
        effect_policy.insert(tag.clone(), rule.clone());
    }
    Ok(SkeletonConfig {
        skeleton_id: decl.id.clone(),
        internal_states: decl.internal_states.clone(),
        entry_states: decl.entry_states.clone(),
        commit_predicates,
        exits,
        pending: decl.pending.clone(),
        input_keys: decl.input_keys.clone(),
        output_keys: decl.output_keys.clone(),
        effect_policy,
    })
}

fn key_declared(key: &str, manifest: &Manifest) -> bool {
    if key.contains(ENTITY_PLACEHOLDER) {
        manifest
            .entities
            .iter()
            .any(|e| manifest.memory_keys.contains(&bind_key(key, e)))
    } else {
        manifest.memory_keys.contains(key)
    }
}

fn validate_references(config: &SkeletonConfig, manifest: &Manifest) -> Result<(), ConfigError> {
    let skeleton = &config.skeleton_id;
    let mut states: Vec<&StateId> = Vec::new();
    let mut keys: Vec<&Key> = Vec::new();
    states.extend(config.internal_states.iter());
    states.extend(config.entry_states.iter());
    for p in &config.commit_predicates {
        p.predicate.visit(&mut states, &mut keys);
    }
    for e in &config.exits {
        states.push(&e.from);
        states.push(&e.to);
        e.predicate.predicate.visit(&mut states, &mut keys);
    }
    for e in &config.pending {
        states.push(&e.from);
        states.push(&e.to);
    }
    keys.extend(config.input_keys.iter());
    keys.extend(config.output_keys.iter());
    if let Some(s) = states.into_iter().find(|s| !manifest.states.contains(*s)) {
        return Err(ConfigError::UnknownState {
            skeleton: skeleton.clone(),
            state: s.clone(),
        });
    }
    if let Some(k) = keys.into_iter().find(|k| !key_declared(k, manifest)) {
        return Err(ConfigError::UnknownKey {
            skeleton: skeleton.clone(),
            key: k.clone(),
        });
    }
    if let Some(s) = config
        .entry_states
        .iter()
        .find(|s| !config.internal_states.contains(*s))
    {
        return Err(ConfigError::EntryNotInternal {
            skeleton: skeleton.clone(),
            state: s.clone(),
        });
    }
    Ok(())
}

fn content_hash(manifest: &Manifest, configs: &BTreeMap<String, SkeletonConfig>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(manifest).expect("manifest serializes"));
    hasher.update(serde_json::to_vec(configs).expect("configs serialize"));
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub skeleton: String,
    pub field: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    pub field_diffs: Vec<FieldDiff>,
}

impl DiffReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.field_diffs.is_empty()
    }
}

/// Compare a candidate export against the frozen reviewed set.
pub fn diff_configs(candidate: &ConfigSet, frozen: &ConfigSet) -> DiffReport {
    let mut report = DiffReport::default();
    for id in frozen.configs.keys() {
        if !candidate.configs.contains_key(id) {
            report.missing.push(id.clone());
        }
    }
    for (id, cand) in &candidate.configs {
        let Some(froz) = frozen.configs.get(id) else {
            report.extra.push(id.clone());
            continue;
        };
        let a = serde_json::to_value(cand).expect("config serializes");
        let b = serde_json::to_value(froz).expect("config serializes");
        let (Some(a), Some(b)) = (a.as_object(), b.as_object()) else {
            continue;
        };
        for (field, va) in a {
            if b.get(field) != Some(va) {
                report.field_diffs.push(FieldDiff {
                    skeleton: id.clone(),
                    field: field.clone(),
                });
            }
        }
    }
    report
}
