//! Scenario script documents: the declared agent model, an ordered action
//! script with deterministic effects, and failure-injection sites.
//!
//! The JSON layout is documented in `docs/scenario-format.md`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    AgentDefinition, AgentModel, Effect, EngineError, FailureSignal, Key, Memory, StateId, Transition, Value,
};

pub const SCENARIO_FORMAT: u32 = 1;

/// A durable effect emitted by an action, tagged for the effect policy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Emission {
    pub tag: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedAction {
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<StateId>,
    pub entity: String,
    #[serde(default)]
    pub effect: Effect,
    /// Declared reads. `None` means unannotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reads: Option<BTreeSet<Key>>,
    /// Declared writes. `None` means unannotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub writes: Option<BTreeSet<Key>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emits: Option<Emission>,
    #[serde(default = "default_cost")]
    pub cost: u32,
}

fn default_cost() -> u32 {
    1
}

impl ScriptedAction {
    /// Keys this action's effect actually touches.
    pub fn touched(&self) -> BTreeSet<Key> {
        self.effect.keys().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureSite {
    pub seq: u64,
    pub action: String,
    pub signal: FailureSignal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub format: u32,
    pub name: String,
    pub states: BTreeSet<StateId>,
    pub initial_state: StateId,
    pub actions: BTreeSet<String>,
    pub transitions: BTreeSet<Transition>,
    pub memory_keys: BTreeSet<Key>,
    #[serde(default)]
    pub initial_memory: Memory,
    pub script: Vec<ScriptedAction>,
    #[serde(default)]
    pub failure_sites: Vec<FailureSite>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scenario format {0}")]
    Format(u32),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("failure site at seq {seq} names {found}, script has {expected}")]
    SiteMismatch { seq: u64, found: String, expected: String },
    #[error("failure site seq {0} beyond script end")]
    SiteOutOfRange(u64),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn definition(&self) -> AgentDefinition {
        AgentDefinition {
            states: self.states.clone(),
            actions: self.actions.clone(),
            transitions: self.transitions.clone(),
            memory_keys: self.memory_keys.clone(),
            initial_state: self.initial_state.clone(),
            initial_memory: self.initial_memory.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.format != SCENARIO_FORMAT {
            return Err(ScenarioError::Format(self.format));
        }
        self.definition().validate()?;
        for site in &self.failure_sites {
            let step = self
                .script
                .get(site.seq as usize)
                .ok_or(ScenarioError::SiteOutOfRange(site.seq))?;
            if step.action != site.action {
                return Err(ScenarioError::SiteMismatch {
                    seq: site.seq,
                    found: site.action.clone(),
                    expected: step.action.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn agent(&self) -> Result<AgentModel, EngineError> {
        AgentModel::new(self.definition())
    }

    /// Execute the whole script with no injected failure.
    pub fn run_uninterrupted(&self) -> Result<AgentModel, EngineError> {
        let mut agent = self.agent()?;
        for step in &self.script {
            agent.execute_step(&step.action, step.to.as_deref(), &step.effect)?;
        }
        Ok(agent)
    }
}
