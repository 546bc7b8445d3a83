//! Runtime sidecar: lifts base steps to subtask instances, aggregates
//! read/write interfaces, derives producer/consumer edges and records
//! instance-aligned checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{ConfigSet, EffectClass, SkeletonConfig};
use crate::engine::{AgentModel, EngineError, FailureEvent, Key, Memory, MemorySnapshot, StateId, StepRecord, Value};
use crate::scenario::ScriptedAction;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId {
    pub skeleton: String,
    pub entity: String,
    pub ordinal: u32,
}

impl InstanceId {
    pub fn new(skeleton: &str, entity: &str, ordinal: u32) -> Self {
        Self {
            skeleton: skeleton.into(),
            entity: entity.into(),
            ordinal,
        }
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}::{}", self.skeleton, self.entity, self.ordinal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Active,
    Committed,
    Exited,
}

impl InstanceStatus {
    pub fn is_live(self) -> bool {
        self != InstanceStatus::Exited
    }

    /// Committed or exited.
    pub fn is_completed(self) -> bool {
        self != InstanceStatus::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Entry,
    Commit,
    Exit,
}

impl fmt::Display for Lifecycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lifecycle::Entry => "entry",
            Lifecycle::Commit => "commit",
            Lifecycle::Exit => "exit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotMode {
    RegistryOnly,
    Inline,
}

impl SnapshotMode {
    pub const ALL: [SnapshotMode; 2] = [SnapshotMode::RegistryOnly, SnapshotMode::Inline];

    pub fn as_str(self) -> &'static str {
        match self {
            SnapshotMode::RegistryOnly => "registry_only",
            SnapshotMode::Inline => "inline",
        }
    }
}

impl std::str::FromStr for SnapshotMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown snapshot mode `{s}`"))
    }
}

/// Registry bookkeeping kept by a registry-only checkpoint. Memory is
/// reconstructed by inverting the delta suffix from `seq`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryDelta {
    pub seq: u64,
    pub status: InstanceStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CheckpointPayload {
    RegistryOnly(RegistryDelta),
    Inline(MemorySnapshot),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: String,
    pub instance: InstanceId,
    pub lifecycle: Lifecycle,
    pub seq: u64,
    /// False only for exits forced through an unreviewed edge.
    pub closed: bool,
    pub payload: CheckpointPayload,
}

impl Checkpoint {
    pub fn payload_bytes(&self) -> usize {
        serde_json::to_vec(&self.payload).map(|v| v.len()).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub seq: u64,
    pub instance: InstanceId,
    pub tag: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: InstanceId,
    pub status: InstanceStatus,
    pub activated_at: u64,
    pub steps: BTreeSet<u64>,
    pub reads: BTreeMap<Key, BTreeSet<u64>>,
    pub writes: BTreeMap<Key, BTreeSet<u64>>,
    pub emissions: Vec<EmissionRecord>,
}

impl InstanceRecord {
    pub fn read_set(&self) -> BTreeSet<Key> {
        self.reads.keys().cloned().collect()
    }

    pub fn write_set(&self) -> BTreeSet<Key> {
        self.writes.keys().cloned().collect()
    }

    pub fn has_steps_since(&self, seq: u64) -> bool {
        self.steps.range(seq..).next().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftedStep {
    pub base: StepRecord,
    pub skeleton: String,
    pub instance: InstanceId,
    pub reads: BTreeSet<Key>,
    pub writes: BTreeSet<Key>,
    pub checkpoints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub producer: InstanceId,
    pub consumer: InstanceId,
    pub witness_keys: BTreeSet<Key>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Localization {
    Unique(InstanceId),
    Abstain(Vec<InstanceId>),
}

/// Instance key used for lookup. Weakened forms exist for the localization audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceKey {
    Full(InstanceId),
    DropOrdinal { skeleton: String, entity: String },
    DropEntity { skeleton: String },
}

impl InstanceKey {
    pub fn matches(&self, id: &InstanceId) -> bool {
        match self {
            InstanceKey::Full(full) => full == id,
            InstanceKey::DropOrdinal { skeleton, entity } => &id.skeleton == skeleton && &id.entity == entity,
            InstanceKey::DropEntity { skeleton } => &id.skeleton == skeleton,
        }
    }

    pub fn drop_ordinal(id: &InstanceId) -> Self {
        InstanceKey::DropOrdinal {
            skeleton: id.skeleton.clone(),
            entity: id.entity.clone(),
        }
    }

    pub fn drop_entity(id: &InstanceId) -> Self {
        InstanceKey::DropEntity {
            skeleton: id.skeleton.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestoreOutcome {
    pub seq: u64,
    pub cost_units: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointLogEntry {
    pub id: String,
    pub instance: String,
    pub lifecycle: Lifecycle,
    pub seq: u64,
    pub payload_bytes: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SidecarError {
    #[error("no skeleton covers state {0}")]
    SkeletonUnresolved(StateId),
    #[error("state {state} belongs to several skeletons: {skeletons:?}")]
    AmbiguousSkeleton { state: StateId, skeletons: Vec<String> },
    #[error("duplicate {lifecycle} checkpoint for {instance}")]
    DuplicateLifecycle { instance: String, lifecycle: Lifecycle },
    #[error("unknown checkpoint {0}")]
    UnknownCheckpoint(String),
    #[error("unknown instance {0}")]
    UnknownInstance(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Per-run sidecar state. Not shared across runs.
#[derive(Debug, Clone)]
pub struct Sidecar {
    configs: Arc<ConfigSet>,
    mode: SnapshotMode,
    instances: Vec<InstanceRecord>,
    checkpoints: Vec<Checkpoint>,
    lifted: Vec<LiftedStep>,
    tombstones: Vec<EmissionRecord>,
    peak_payload_bytes: usize,
}

impl Sidecar {
    pub fn new(configs: Arc<ConfigSet>, mode: SnapshotMode) -> Self {
        Self {
            configs,
            mode,
            instances: Vec::new(),
            checkpoints: Vec::new(),
            lifted: Vec::new(),
            tombstones: Vec::new(),
            peak_payload_bytes: 0,
        }
    }

    pub fn configs(&self) -> &ConfigSet {
        &self.configs
    }

    pub fn mode(&self) -> SnapshotMode {
        self.mode
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn instance(&self, id: &InstanceId) -> Option<&InstanceRecord> {
        self.instances.iter().find(|i| &i.id == id)
    }

    fn instance_mut(&mut self, id: &InstanceId) -> Option<&mut InstanceRecord> {
        self.instances.iter_mut().find(|i| &i.id == id)
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn checkpoint(&self, id: &str) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.id == id)
    }

    /// Recency-ordered checkpoints of one instance.
    pub fn checkpoints_of(&self, id: &InstanceId) -> Vec<&Checkpoint> {
        let mut out: Vec<&Checkpoint> = self.checkpoints.iter().filter(|c| &c.instance == id).collect();
        out.sort_by_key(|c| c.seq);
        out
    }

    pub fn lifted(&self) -> &[LiftedStep] {
        &self.lifted
    }

    /// Emissions removed by rewinds.
    pub fn tombstones(&self) -> &[EmissionRecord] {
        &self.tombstones
    }

    pub fn emissions(&self) -> Vec<&EmissionRecord> {
        let mut all: Vec<&EmissionRecord> = self.instances.iter().flat_map(|i| i.emissions.iter()).collect();
        all.sort_by_key(|e| e.seq);
        all
    }

    pub fn effect_class(&self, emission: &EmissionRecord) -> Option<EffectClass> {
        self.configs
            .effect_rule(&emission.instance.skeleton, &emission.tag)
            .map(|r| r.class)
    }

    pub fn payload_bytes(&self) -> usize {
        self.checkpoints.iter().map(Checkpoint::payload_bytes).sum()
    }

    /// Largest total payload held at any point in the run.
    pub fn peak_payload_bytes(&self) -> usize {
        self.peak_payload_bytes
    }

    pub fn checkpoint_log(&self) -> Vec<CheckpointLogEntry> {
        self.checkpoints
            .iter()
            .map(|c| CheckpointLogEntry {
                id: c.id.clone(),
                instance: c.instance.to_string(),
                lifecycle: c.lifecycle,
                seq: c.seq,
                payload_bytes: c.payload_bytes(),
            })
            .collect()
    }

    /// Skeleton owning a step. A declared exit belongs to the skeleton it
    /// leaves; otherwise the target state decides, then the source state.
    pub fn resolve_skeleton(&self, step: &StepRecord) -> Result<&SkeletonConfig, SidecarError> {
        let unique = |state: &StateId| -> Result<Option<&SkeletonConfig>, SidecarError> {
            let covering = self.configs.skeletons_covering(state);
            match covering.as_slice() {
                [] => Ok(None),
                [one] => Ok(Some(*one)),
                many => Err(SidecarError::AmbiguousSkeleton {
                    state: state.clone(),
                    skeletons: many.iter().map(|c| c.skeleton_id.clone()).collect(),
                }),
            }
        };
        let source = unique(&step.from_state)?;
        if let Some(src) = source {
            let leaving = src.exit_for(&step.from_state, &step.to_state).is_some()
                || src
                    .pending
                    .iter()
                    .any(|e| e.from == step.from_state && e.to == step.to_state);
            if leaving {
                return Ok(src);
            }
        }
        if let Some(target) = unique(&step.to_state)? {
            return Ok(target);
        }
        source.ok_or_else(|| SidecarError::SkeletonUnresolved(step.from_state.clone()))
    }

    fn live_instance(&self, skeleton: &str, entity: &str) -> Option<&InstanceId> {
        self.instances
            .iter()
            .find(|i| i.status.is_live() && i.id.skeleton == skeleton && i.id.entity == entity)
            .map(|i| &i.id)
    }

    fn record_checkpoint(
        &mut self,
        instance: &InstanceId,
        lifecycle: Lifecycle,
        seq: u64,
        memory: &Memory,
        closed: bool,
    ) -> Result<String, SidecarError> {
        if lifecycle != Lifecycle::Exit
            && self
                .checkpoints
                .iter()
                .any(|c| &c.instance == instance && c.lifecycle == lifecycle)
        {
            return Err(SidecarError::DuplicateLifecycle {
                instance: instance.to_string(),
                lifecycle,
            });
        }
        let status = match lifecycle {
            Lifecycle::Entry => InstanceStatus::Active,
            Lifecycle::Commit => InstanceStatus::Committed,
            Lifecycle::Exit => InstanceStatus::Exited,
        };
        let payload = match self.mode {
            SnapshotMode::RegistryOnly => CheckpointPayload::RegistryOnly(RegistryDelta { seq, status }),
            SnapshotMode::Inline => CheckpointPayload::Inline(MemorySnapshot {
                seq,
                entries: memory.clone(),
            }),
        };
        let id = format!("{instance}#{lifecycle}@{seq}");
        self.checkpoints.push(Checkpoint {
            id: id.clone(),
            instance: instance.clone(),
            lifecycle,
            seq,
            closed,
            payload,
        });
        if let Some(rec) = self.instance_mut(instance) {
            rec.status = status;
        }
        self.peak_payload_bytes = self.peak_payload_bytes.max(self.payload_bytes());
        Ok(id)
    }

    /// Lift one committed step. `memory` is the agent memory after the step.
    pub fn observe(
        &mut self,
        step: &StepRecord,
        action: &ScriptedAction,
        memory: &Memory,
    ) -> Result<LiftedStep, SidecarError> {
        let config = self.resolve_skeleton(step)?.clone();
        let skeleton = config.skeleton_id.as_str();
        let entity = action.entity.as_str();
        let mut checkpoints = Vec::new();

        let instance = match self.live_instance(skeleton, entity) {
            Some(id) => id.clone(),
            None => {
                let ordinal = self
                    .instances
                    .iter()
                    .filter(|i| i.id.skeleton == skeleton && i.id.entity == entity)
                    .count() as u32;
                let id = InstanceId::new(skeleton, entity, ordinal);
                self.instances.push(InstanceRecord {
                    id: id.clone(),
                    status: InstanceStatus::Active,
                    activated_at: step.seq,
                    steps: BTreeSet::new(),
                    reads: BTreeMap::new(),
                    writes: BTreeMap::new(),
                    emissions: Vec::new(),
                });
                let before = memory_before(step, memory);
                checkpoints.push(self.record_checkpoint(&id, Lifecycle::Entry, step.seq, &before, true)?);
                id
            }
        };

        let interface = config.interface_for(entity);
        let reads: BTreeSet<Key> = match &action.reads {
            Some(declared) => declared.intersection(&interface).cloned().collect(),
            None => interface.clone(),
        };
        let mut writes: BTreeSet<Key> = match &action.writes {
            Some(declared) => declared.intersection(&interface).cloned().collect(),
            None => interface.clone(),
        };
        writes.extend(action.touched());

        let rec = self.instance_mut(&instance).expect("instance registered");
        rec.steps.insert(step.seq);
        for k in &reads {
            rec.reads.entry(k.clone()).or_default().insert(step.seq);
        }
        for k in &writes {
            rec.writes.entry(k.clone()).or_default().insert(step.seq);
        }
        if let Some(em) = &action.emits {
            rec.emissions.push(EmissionRecord {
                seq: step.seq,
                instance: instance.clone(),
                tag: em.tag.clone(),
                payload: em.payload.clone(),
            });
        }
        let status = rec.status;

        if status == InstanceStatus::Active && config.commit_holds(&step.to_state, memory, entity) {
            checkpoints.push(self.record_checkpoint(&instance, Lifecycle::Commit, step.seq + 1, memory, true)?);
        }
        if config.internal_states.contains(&step.from_state) {
            if let Some(exit) = config.exit_for(&step.from_state, &step.to_state) {
                let committed = self.instance(&instance).map(|i| i.status) == Some(InstanceStatus::Committed);
                if committed && exit.predicate.predicate.evaluate(&step.to_state, memory, entity) {
                    checkpoints.push(self.record_checkpoint(&instance, Lifecycle::Exit, step.seq + 1, memory, true)?);
                }
            }
        }

        let lifted = LiftedStep {
            base: step.clone(),
            skeleton: skeleton.to_string(),
            instance,
            reads,
            writes,
            checkpoints,
        };
        self.lifted.push(lifted.clone());
        Ok(lifted)
    }

    /// Mark an instance exited through an edge that is not a reviewed exit.
    /// The resulting checkpoint is recorded as not closed.
    pub fn force_exit(&mut self, instance: &InstanceId, seq: u64, memory: &Memory) -> Result<String, SidecarError> {
        if self.instance(instance).is_none() {
            return Err(SidecarError::UnknownInstance(instance.to_string()));
        }
        self.record_checkpoint(instance, Lifecycle::Exit, seq, memory, false)
    }

    /// Unique live instance for a failure, or abstention.
    pub fn localize(&self, failure: &FailureEvent, entity: &str) -> Localization {
        let candidates: Vec<InstanceId> = self
            .instances
            .iter()
            .filter(|i| i.status.is_live() && i.id.entity == entity)
            .filter(|i| {
                self.configs
                    .get(&i.id.skeleton)
                    .is_some_and(|c| c.internal_states.contains(&failure.state))
            })
            .map(|i| i.id.clone())
            .collect();
        match candidates.as_slice() {
            [one] => Localization::Unique(one.clone()),
            _ => Localization::Abstain(candidates),
        }
    }

    /// All recorded instances matching a (possibly weakened) key.
    pub fn resolve_key(&self, key: &InstanceKey) -> Vec<InstanceId> {
        self.instances
            .iter()
            .filter(|i| key.matches(&i.id))
            .map(|i| i.id.clone())
            .collect()
    }

    /// Producer/consumer edges: W(p) ∩ R(q) nonempty with a p-write preceding a q-read.
    pub fn dependency_edges(&self) -> Vec<DependencyEdge> {
        let mut edges = Vec::new();
        for p in &self.instances {
            for q in &self.instances {
                if p.id == q.id {
                    continue;
                }
                let witness_keys: BTreeSet<Key> = p
                    .writes
                    .iter()
                    .filter_map(|(k, wseqs)| {
                        let rseqs = q.reads.get(k)?;
                        let first_write = wseqs.iter().next()?;
                        let last_read = rseqs.iter().next_back()?;
                        (first_write < last_read).then(|| k.clone())
                    })
                    .collect();
                if !witness_keys.is_empty() {
                    edges.push(DependencyEdge {
                        producer: p.id.clone(),
                        consumer: q.id.clone(),
                        witness_keys,
                    });
                }
            }
        }
        edges
    }

    /// Memory at checkpoint `id`, reconstructed according to the mode.
    pub fn checkpoint_memory(&self, agent: &AgentModel, id: &str) -> Result<(MemorySnapshot, usize), SidecarError> {
        let c = self
            .checkpoint(id)
            .ok_or_else(|| SidecarError::UnknownCheckpoint(id.to_string()))?;
        match &c.payload {
            CheckpointPayload::RegistryOnly(delta) => {
                let cost = agent.inversion_cost(delta.seq);
                Ok((agent.invert_suffix(delta.seq)?, cost))
            }
            CheckpointPayload::Inline(snapshot) => Ok((snapshot.clone(), snapshot.entries.len())),
        }
    }

    /// Restore agent memory and state to the checkpoint and rewind the registry.
    pub fn restore_checkpoint(&mut self, agent: &mut AgentModel, id: &str) -> Result<RestoreOutcome, SidecarError> {
        let (snapshot, cost_units) = self.checkpoint_memory(agent, id)?;
        agent.restore_to(&snapshot)?;
        self.rewind(snapshot.seq);
        Ok(RestoreOutcome {
            seq: snapshot.seq,
            cost_units,
        })
    }

    /// Drop everything recorded at or after history position `seq`.
    pub fn rewind(&mut self, seq: u64) {
        let mut tombstones = Vec::new();
        self.instances.retain(|i| {
            if i.activated_at >= seq {
                tombstones.extend(i.emissions.iter().cloned());
                false
            } else {
                true
            }
        });
        for rec in &mut self.instances {
            rec.steps.retain(|s| *s < seq);
            for map in [&mut rec.reads, &mut rec.writes] {
                for seqs in map.values_mut() {
                    seqs.retain(|s| *s < seq);
                }
                map.retain(|_, seqs| !seqs.is_empty());
            }
            let (keep, drop): (Vec<_>, Vec<_>) = rec.emissions.drain(..).partition(|e| e.seq < seq);
            rec.emissions = keep;
            tombstones.extend(drop);
        }
        let live: BTreeSet<InstanceId> = self.instances.iter().map(|i| i.id.clone()).collect();
        self.checkpoints.retain(|c| c.seq <= seq && live.contains(&c.instance));
        for rec in &mut self.instances {
            let last = self
                .checkpoints
                .iter()
                .filter(|c| c.instance == rec.id)
                .max_by_key(|c| (c.seq, c.lifecycle));
            rec.status = match last.map(|c| c.lifecycle) {
                Some(Lifecycle::Exit) => InstanceStatus::Exited,
                Some(Lifecycle::Commit) => InstanceStatus::Committed,
                _ => InstanceStatus::Active,
            };
        }
        self.lifted.retain(|l| l.base.seq < seq);
        tombstones.sort_by_key(|e| e.seq);
        self.tombstones.extend(tombstones);
    }
}

fn memory_before(step: &StepRecord, after: &Memory) -> Memory {
    let mut memory = after.clone();
    for (k, change) in &step.memory_delta {
        match &change.old {
            Some(v) => {
                memory.insert(k.clone(), v.clone());
            }
            None => {
                memory.remove(k);
            }
        }
    }
    memory
}
