//! Deterministic execution of FSM-governed agents.
//!
//! An [`AgentModel`] owns the declared state/action sets, the legal transition
//! relation, the live memory map and the recorded step history. Every
//! committed step carries an invertible [`MemoryDelta`], so any suffix of the
//! history can be undone without a stored snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StateId = String;
pub type ActionId = String;
pub type Key = String;

/// Structured memory value. No opaque blobs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
    List(Vec<Value>),
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::List(items) => {
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
        }
    }
}

pub type Memory = BTreeMap<Key, Value>;

/// Scripted effect: `Some(v)` sets a key, `None` removes it.
pub type Effect = BTreeMap<Key, Option<Value>>;

/// Old and new value of one key; `None` means absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyChange {
    pub old: Option<Value>,
    pub new: Option<Value>,
}

pub type MemoryDelta = BTreeMap<Key, KeyChange>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub from: StateId,
    pub action: ActionId,
    pub to: StateId,
}

impl Transition {
    pub fn new(from: &str, action: &str, to: &str) -> Self {
        Self {
            from: from.to_string(),
            action: action.to_string(),
            to: to.to_string(),
        }
    }
}

/// One committed transition and the memory change it made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub seq: u64,
    pub from_state: StateId,
    pub action: ActionId,
    pub to_state: StateId,
    pub memory_delta: MemoryDelta,
}

impl StepRecord {
    pub fn apply(&self, memory: &mut Memory) {
        for (k, change) in &self.memory_delta {
            match &change.new {
                Some(v) => {
                    memory.insert(k.clone(), v.clone());
                }
                None => {
                    memory.remove(k);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureSignal {
    Timeout,
    InvalidOutput,
    MissingInput,
    ToolException,
    GovernorDenial,
    ContractViolation,
}

impl FailureSignal {
    pub const ALL: [FailureSignal; 6] = [
        FailureSignal::Timeout,
        FailureSignal::InvalidOutput,
        FailureSignal::MissingInput,
        FailureSignal::ToolException,
        FailureSignal::GovernorDenial,
        FailureSignal::ContractViolation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FailureSignal::Timeout => "TIMEOUT",
            FailureSignal::InvalidOutput => "INVALID_OUTPUT",
            FailureSignal::MissingInput => "MISSING_INPUT",
            FailureSignal::ToolException => "TOOL_EXCEPTION",
            FailureSignal::GovernorDenial => "GOVERNOR_DENIAL",
            FailureSignal::ContractViolation => "CONTRACT_VIOLATION",
        }
    }
}

impl fmt::Display for FailureSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureSignal {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureSignal::ALL
            .iter()
            .copied()
            .find(|sig| sig.as_str() == s)
            .ok_or_else(|| EngineError::InvalidSignal(s.to_string()))
    }
}

/// Observable failure at an action boundary. The failed action never reaches
/// the history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub step: u64,
    pub state: StateId,
    pub action: ActionId,
    pub signal: FailureSignal,
}

/// Full memory map at a history position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub seq: u64,
    pub entries: Memory,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("illegal transition: no ({state}, {action}, _) in the transition relation")]
    IllegalTransition { state: StateId, action: ActionId },
    #[error("ambiguous transition from {state} on {action}: targets {targets:?}")]
    AmbiguousTransition {
        state: StateId,
        action: ActionId,
        targets: Vec<StateId>,
    },
    #[error("undeclared memory key: {0}")]
    UndeclaredKey(Key),
    #[error("unknown action: {0}")]
    UnknownAction(ActionId),
    #[error("unknown state: {0}")]
    UnknownState(StateId),
    #[error("invalid failure signal: {0}")]
    InvalidSignal(String),
    #[error("snapshot seq {seq} beyond history length {len}")]
    SnapshotSeqOutOfRange { seq: u64, len: u64 },
    #[error("delta for key {key} at seq {seq} does not match current memory")]
    NonInvertibleDelta { seq: u64, key: Key },
    #[error("agent halted by failure at step {0}")]
    Halted(u64),
}

/// The model skeleton an agent is built from: declared sets and initial values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDefinition {
    pub states: BTreeSet<StateId>,
    pub actions: BTreeSet<ActionId>,
    pub transitions: BTreeSet<Transition>,
    pub memory_keys: BTreeSet<Key>,
    pub initial_state: StateId,
    pub initial_memory: Memory,
}

impl AgentDefinition {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.states.contains(&self.initial_state) {
            return Err(EngineError::UnknownState(self.initial_state.clone()));
        }
        for t in &self.transitions {
            for s in [&t.from, &t.to] {
                if !self.states.contains(s) {
                    return Err(EngineError::UnknownState(s.clone()));
                }
            }
            if !self.actions.contains(&t.action) {
                return Err(EngineError::UnknownAction(t.action.clone()));
            }
        }
        if let Some(k) = self.initial_memory.keys().find(|k| !self.memory_keys.contains(*k)) {
            return Err(EngineError::UndeclaredKey(k.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentModel {
    definition: AgentDefinition,
    current_state: StateId,
    memory: Memory,
    history: Vec<StepRecord>,
    halted: Option<FailureEvent>,
}

impl AgentModel {
    pub fn new(definition: AgentDefinition) -> Result<Self, EngineError> {
        definition.validate()?;
        Ok(Self {
            current_state: definition.initial_state.clone(),
            memory: definition.initial_memory.clone(),
            definition,
            history: Vec::new(),
            halted: None,
        })
    }

    pub fn definition(&self) -> &AgentDefinition {
        &self.definition
    }

    pub fn current_state(&self) -> &str {
        &self.current_state
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn next_seq(&self) -> u64 {
        self.history.len() as u64
    }

    pub fn halted(&self) -> Option<&FailureEvent> {
        self.halted.as_ref()
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        MemorySnapshot {
            seq: self.next_seq(),
            entries: self.memory.clone(),
        }
    }

    /// Successor state for `action` from the current state, optionally pinned
    /// to `target` when the relation offers more than one.
    pub fn resolve_target(&self, action: &str, target: Option<&str>) -> Result<StateId, EngineError> {
        let mut candidates: Vec<&StateId> = self
            .definition
            .transitions
            .iter()
            .filter(|t| t.from == self.current_state && t.action == action)
            .map(|t| &t.to)
            .collect();
        if let Some(target) = target {
            candidates.retain(|to| to.as_str() == target);
        }
        match candidates.as_slice() {
            [] => Err(EngineError::IllegalTransition {
                state: self.current_state.clone(),
                action: action.to_string(),
            }),
            [to] => Ok((*to).clone()),
            many => Err(EngineError::AmbiguousTransition {
                state: self.current_state.clone(),
                action: action.to_string(),
                targets: many.iter().map(|s| (*s).clone()).collect(),
            }),
        }
    }

    pub fn execute_step(
        &mut self,
        action: &str,
        target: Option<&str>,
        effect: &Effect,
    ) -> Result<StepRecord, EngineError> {
        if let Some(f) = &self.halted {
            return Err(EngineError::Halted(f.step));
        }
        let to_state = self.resolve_target(action, target)?;
        if let Some(k) = effect.keys().find(|k| !self.definition.memory_keys.contains(*k)) {
            return Err(EngineError::UndeclaredKey(k.clone()));
        }
        let memory_delta: MemoryDelta = effect
            .iter()
            .map(|(k, new)| {
                let change = KeyChange {
                    old: self.memory.get(k).cloned(),
                    new: new.clone(),
                };
                (k.clone(), change)
            })
            .collect();
        let record = StepRecord {
            seq: self.next_seq(),
            from_state: self.current_state.clone(),
            action: action.to_string(),
            to_state: to_state.clone(),
            memory_delta,
        };
        record.apply(&mut self.memory);
        self.current_state = to_state;
        self.history.push(record.clone());
        Ok(record)
    }

    /// Raise a normalized failure for the next action. Nothing is committed.
    pub fn raise_failure(&mut self, action: &str, signal: &str) -> Result<FailureEvent, EngineError> {
        let signal: FailureSignal = signal.parse()?;
        self.raise(action, signal)
    }

    pub fn raise(&mut self, action: &str, signal: FailureSignal) -> Result<FailureEvent, EngineError> {
        if !self.definition.actions.contains(action) {
            return Err(EngineError::UnknownAction(action.to_string()));
        }
        let event = FailureEvent {
            step: self.next_seq(),
            state: self.current_state.clone(),
            action: action.to_string(),
            signal,
        };
        self.halted = Some(event.clone());
        Ok(event)
    }

    /// Clear a pending failure so execution can resume in place.
    pub fn resume(&mut self) {
        self.halted = None;
    }

    pub fn restore_to(&mut self, snapshot: &MemorySnapshot) -> Result<(), EngineError> {
        let len = self.next_seq();
        if snapshot.seq > len {
            return Err(EngineError::SnapshotSeqOutOfRange { seq: snapshot.seq, len });
        }
        self.history.truncate(snapshot.seq as usize);
        self.memory = snapshot.entries.clone();
        self.current_state = self
            .history
            .last()
            .map(|s| s.to_state.clone())
            .unwrap_or_else(|| self.definition.initial_state.clone());
        self.halted = None;
        Ok(())
    }

    /// Memory at `from_seq`, obtained by undoing `history[from_seq..]`.
    pub fn invert_suffix(&self, from_seq: u64) -> Result<MemorySnapshot, EngineError> {
        let len = self.next_seq();
        if from_seq > len {
            return Err(EngineError::SnapshotSeqOutOfRange { seq: from_seq, len });
        }
        let mut memory = self.memory.clone();
        for step in self.history[from_seq as usize..].iter().rev() {
            for (k, change) in &step.memory_delta {
                if memory.get(k) != change.new.as_ref() {
                    return Err(EngineError::NonInvertibleDelta {
                        seq: step.seq,
                        key: k.clone(),
                    });
                }
                match &change.old {
                    Some(v) => {
                        memory.insert(k.clone(), v.clone());
                    }
                    None => {
                        memory.remove(k);
                    }
                }
            }
        }
        Ok(MemorySnapshot {
            seq: from_seq,
            entries: memory,
        })
    }

    /// Number of key changes undone when inverting back to `from_seq`.
    pub fn inversion_cost(&self, from_seq: u64) -> usize {
        self.history
            .iter()
            .skip(from_seq as usize)
            .map(|s| s.memory_delta.len())
            .sum()
    }
}
