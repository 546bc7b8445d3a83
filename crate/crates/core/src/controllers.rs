//! Recovery controllers: whole-task rerun, coarse-state retry, entry-only
//! compensation and frozen gated compensation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{Case, ControllerKind, Status};
use crate::contracts::EffectClass;
use crate::engine::{AgentModel, EngineError, FailureEvent, Memory, StateId, Value};
use crate::gate::{select_rollback, GateOptions, RecoveryDecision};
use crate::scenario::{FailureSite, ScriptedAction};
use crate::sidecar::{InstanceId, Lifecycle, LiftedStep, Localization, Sidecar, SidecarError, SnapshotMode};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
}

/// One durable effect observed in the current attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectEntry {
    pub seq: u64,
    pub instance: InstanceId,
    pub tag: String,
    pub payload: Value,
    pub class: EffectClass,
}

/// Agent, sidecar and effect log of one attempt.
#[derive(Debug, Clone)]
pub struct Runtime {
    pub agent: AgentModel,
    pub sidecar: Sidecar,
    pub effects: Vec<EffectEntry>,
    /// Set when an irreversible effect is emitted twice for one entity.
    pub effect_violation: bool,
}

impl Runtime {
    pub fn new(case: &Case, mode: SnapshotMode) -> Result<Self, RunError> {
        Ok(Self {
            agent: case.scenario.agent()?,
            sidecar: Sidecar::new(case.configs.clone(), mode),
            effects: Vec::new(),
            effect_violation: false,
        })
    }

    pub fn step(&mut self, action: &ScriptedAction) -> Result<LiftedStep, RunError> {
        let rec = self
            .agent
            .execute_step(&action.action, action.to.as_deref(), &action.effect)?;
        let lifted = self.sidecar.observe(&rec, action, self.agent.memory())?;
        if let Some(em) = &action.emits {
            let class = self
                .sidecar
                .configs()
                .effect_rule(&lifted.skeleton, &em.tag)
                .map(|r| r.class)
                .unwrap_or(EffectClass::Irreversible);
            if class == EffectClass::Irreversible
                && self.effects.iter().any(|e| {
                    e.class == EffectClass::Irreversible
                        && e.tag == em.tag
                        && e.instance.entity == lifted.instance.entity
                })
            {
                self.effect_violation = true;
            }
            self.effects.push(EffectEntry {
                seq: rec.seq,
                instance: lifted.instance.clone(),
                tag: em.tag.clone(),
                payload: em.payload.clone(),
                class,
            });
        }
        Ok(lifted)
    }

    /// Undo non-durable effects emitted at or after `seq`.
    fn drop_effects_from(&mut self, seq: u64) {
        let actions = self.sidecar.configs().manifest().actions.clone();
        let configs = self.sidecar.configs().clone();
        self.effects.retain(|e| {
            if e.seq < seq {
                return true;
            }
            match e.class {
                EffectClass::Irreversible => true,
                EffectClass::Reversible => false,
                EffectClass::Compensable => !configs
                    .effect_rule(&e.instance.skeleton, &e.tag)
                    .and_then(|r| r.compensation.as_ref())
                    .is_some_and(|a| actions.contains(a)),
            }
        });
    }

    pub fn restore_checkpoint(&mut self, id: &str) -> Result<(u64, usize), RunError> {
        let out = self.sidecar.restore_checkpoint(&mut self.agent, id)?;
        self.drop_effects_from(out.seq);
        Ok((out.seq, out.cost_units))
    }

    /// Restore to an arbitrary history position by delta inversion.
    pub fn restore_seq(&mut self, seq: u64) -> Result<usize, RunError> {
        let cost = self.agent.inversion_cost(seq);
        let snapshot = self.agent.invert_suffix(seq)?;
        self.agent.restore_to(&snapshot)?;
        self.sidecar.rewind(seq);
        self.drop_effects_from(seq);
        Ok(cost)
    }

    pub fn state_at(&self, seq: u64) -> StateId {
        if seq == 0 {
            self.agent.definition().initial_state.clone()
        } else {
            self.agent.history()[seq as usize - 1].to_state.clone()
        }
    }
}

/// Runtime halted at a failure site.
#[derive(Debug, Clone)]
pub struct FailedRun {
    pub runtime: Runtime,
    pub failure: FailureEvent,
    pub site: FailureSite,
    pub entity: String,
    pub localized: Localization,
    /// Instances committed or exited when the failure was raised.
    pub completed_before: BTreeSet<InstanceId>,
}

impl FailedRun {
    pub fn failed_instance(&self) -> Option<&InstanceId> {
        match &self.localized {
            Localization::Unique(id) => Some(id),
            Localization::Abstain(_) => None,
        }
    }
}

pub fn run_to_failure(case: &Case, site: &FailureSite, mode: SnapshotMode) -> Result<FailedRun, RunError> {
    let mut runtime = Runtime::new(case, mode)?;
    for action in &case.scenario.script[..site.seq as usize] {
        runtime.step(action)?;
    }
    let failure = runtime.agent.raise(&site.action, site.signal)?;
    let entity = case.failed_entity(site).to_string();
    let localized = runtime.sidecar.localize(&failure, &entity);
    let completed_before = runtime
        .sidecar
        .instances()
        .iter()
        .filter(|i| i.status.is_completed())
        .map(|i| i.id.clone())
        .collect();
    Ok(FailedRun {
        runtime,
        failure,
        site: site.clone(),
        entity,
        localized,
        completed_before,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayedStep {
    pub seq: u64,
    pub action: String,
    pub instance: InstanceId,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub state: StateId,
    pub memory: Memory,
    pub effects: Vec<EffectEntry>,
    /// Whole script executed without an engine or sidecar error.
    pub complete: bool,
    pub effect_violation: bool,
}

impl Terminal {
    pub fn audit_ready(&self) -> bool {
        self.complete && !self.effect_violation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub controller: ControllerKind,
    pub options: GateOptions,
    pub status: Status,
    pub restored_checkpoint: Option<String>,
    pub restored_seq: Option<u64>,
    pub replay_trace: Vec<ReplayedStep>,
    pub recovery_observed: bool,
    pub decision: Option<RecoveryDecision>,
    pub dropped_consumers: Vec<InstanceId>,
    pub failed_instance: Option<InstanceId>,
    pub completed_before: Vec<InstanceId>,
    pub restore_cost: usize,
    pub terminal: Option<Terminal>,
}

impl RecoveryOutcome {
    fn new(kind: ControllerKind, options: GateOptions, failed: &FailedRun) -> Self {
        Self {
            controller: kind,
            options,
            status: Status::NoRecov,
            restored_checkpoint: None,
            restored_seq: None,
            replay_trace: Vec::new(),
            recovery_observed: false,
            decision: None,
            dropped_consumers: Vec::new(),
            failed_instance: failed.failed_instance().cloned(),
            completed_before: failed.completed_before.iter().cloned().collect(),
            restore_cost: 0,
            terminal: None,
        }
    }
}

fn replayed(lifted: &LiftedStep, action: &ScriptedAction) -> ReplayedStep {
    ReplayedStep {
        seq: lifted.base.seq,
        action: action.action.clone(),
        instance: lifted.instance.clone(),
        cost: action.cost,
    }
}

fn finish(case: &Case, runtime: &Runtime, complete: bool, out: &mut RecoveryOutcome) {
    let terminal = Terminal {
        state: runtime.agent.current_state().to_string(),
        memory: runtime.agent.memory().clone(),
        effects: runtime.effects.clone(),
        complete,
        effect_violation: runtime.effect_violation,
    };
    out.status = if terminal.audit_ready() && case.goal_holds(&terminal.state, &terminal.memory) {
        Status::Ok
    } else {
        Status::Contract
    };
    out.terminal = Some(terminal);
}

/// Whole-task rerun in a fresh attempt.
fn rerun(case: &Case, mode: SnapshotMode, out: &mut RecoveryOutcome) -> Result<(), RunError> {
    let mut runtime = Runtime::new(case, mode)?;
    let mut complete = true;
    for action in &case.scenario.script {
        match runtime.step(action) {
            Ok(lifted) => out.replay_trace.push(replayed(&lifted, action)),
            Err(_) => {
                complete = false;
                break;
            }
        }
    }
    out.restored_seq = Some(0);
    finish(case, &runtime, complete, out);
    Ok(())
}

/// Replay after a restore. `steps` lists the original positions to
/// re-execute before the failed action. A step that only navigated back
/// into a state the restore already reached is skipped.
fn replay_from(
    case: &Case,
    mut runtime: Runtime,
    failed: &FailedRun,
    original: &[LiftedStep],
    steps: &[u64],
    out: &mut RecoveryOutcome,
) {
    let script = &case.scenario.script;
    let f = failed.failure.step;
    let instance = failed.failed_instance().cloned();
    let milestone = |rt: &Runtime| match &instance {
        Some(id) => rt.sidecar.instance(id).is_some_and(|i| i.status.is_completed()),
        None => false,
    };
    let mut complete = true;
    let mut reached = false;
    let order = steps.iter().copied().chain(f..script.len() as u64);
    for seq in order {
        let action = &script[seq as usize];
        if seq < f {
            if let Some(base) = original.iter().map(|l| &l.base).find(|b| b.seq == seq) {
                let here = runtime.agent.current_state();
                if base.from_state != here && base.to_state == here && base.memory_delta.is_empty() {
                    continue;
                }
            }
        }
        match runtime.step(action) {
            Ok(lifted) => {
                if !reached {
                    out.replay_trace.push(replayed(&lifted, action));
                    reached = seq >= f && milestone(&runtime);
                }
            }
            Err(_) => {
                complete = false;
                break;
            }
        }
    }
    finish(case, &runtime, complete, out);
}

/// Restore `checkpoint` and replay the failed instance locally.
fn local_restore(case: &Case, failed: &FailedRun, checkpoint: &str, out: &mut RecoveryOutcome) -> Result<(), RunError> {
    let mut runtime = failed.runtime.clone();
    let original: Vec<LiftedStep> = runtime.sidecar.lifted().to_vec();
    runtime.agent.resume();
    let (seq, cost) = runtime.restore_checkpoint(checkpoint)?;
    out.restored_checkpoint = Some(checkpoint.to_string());
    out.restored_seq = Some(seq);
    out.restore_cost = cost;
    out.recovery_observed = true;
    let own: Vec<u64> = match failed.failed_instance() {
        Some(id) => original
            .iter()
            .filter(|l| l.base.seq >= seq && &l.instance == id)
            .map(|l| l.base.seq)
            .collect(),
        None => Vec::new(),
    };
    replay_from(case, runtime, failed, &original, &own, out);
    Ok(())
}

fn irreversible_since(runtime: &Runtime, seq: u64) -> bool {
    runtime
        .effects
        .iter()
        .any(|e| e.seq >= seq && e.class == EffectClass::Irreversible)
}

/// Run one controller against a halted run.
pub fn recover(
    kind: ControllerKind,
    case: &Case,
    failed: &FailedRun,
    options: GateOptions,
) -> Result<RecoveryOutcome, RunError> {
    let mode = failed.runtime.sidecar.mode();
    let mut out = RecoveryOutcome::new(kind, options, failed);
    match kind {
        ControllerKind::RetryOnly => rerun(case, mode, &mut out)?,
        ControllerKind::CoarseStateRetry => {
            let rt = &failed.runtime;
            let f = failed.failure.step;
            let limit = failed
                .failed_instance()
                .and_then(|id| rt.sidecar.instance(id))
                .map(|i| i.activated_at)
                .unwrap_or(f);
            let anchor = (0..=limit).rev().find(|p| rt.state_at(*p) == case.coarse_anchor);
            match anchor {
                Some(p) if !irreversible_since(rt, p) => {
                    let mut runtime = rt.clone();
                    let original = runtime.sidecar.lifted().to_vec();
                    runtime.agent.resume();
                    out.restore_cost = runtime.restore_seq(p)?;
                    out.restored_seq = Some(p);
                    out.recovery_observed = true;
                    let steps: Vec<u64> = (p..f).collect();
                    replay_from(case, runtime, failed, &original, &steps, &mut out);
                }
                _ => out.status = Status::NoRecov,
            }
        }
        ControllerKind::CompEntryOnly => {
            let entry = failed.failed_instance().and_then(|id| {
                failed
                    .runtime
                    .sidecar
                    .checkpoints_of(id)
                    .into_iter()
                    .find(|c| c.lifecycle == Lifecycle::Entry)
                    .cloned()
            });
            match entry {
                Some(c) if !irreversible_since(&failed.runtime, c.seq) => {
                    local_restore(case, failed, &c.id, &mut out)?;
                }
                _ => out.status = Status::NoRecov,
            }
        }
        ControllerKind::CompFrozen => {
            let decision = select_rollback(&failed.failure, &failed.entity, &failed.runtime.sidecar, options);
            let selected = decision.eligible().map(str::to_string);
            if let Some(id) = &selected {
                out.dropped_consumers = decision
                    .evaluated
                    .iter()
                    .find(|v| &v.checkpoint == id)
                    .map(|v| v.consumers.clone())
                    .unwrap_or_default();
            }
            out.decision = Some(decision);
            match selected {
                Some(id) => local_restore(case, failed, &id, &mut out)?,
                None if case.fallback_allowed => rerun(case, mode, &mut out)?,
                None => out.status = Status::Blocked,
            }
        }
    }
    Ok(out)
}

/// Carry out a restore to `checkpoint` regardless of the gate. Used by the
/// forced-restore oracle and the ablations.
pub fn forced_restore(case: &Case, failed: &FailedRun, checkpoint: &str) -> Result<RecoveryOutcome, RunError> {
    let mut out = RecoveryOutcome::new(ControllerKind::CompFrozen, GateOptions::default(), failed);
    local_restore(case, failed, checkpoint, &mut out)?;
    Ok(out)
}

/// Uninterrupted execution of the case script.
pub fn golden_run(case: &Case, mode: SnapshotMode) -> Result<Runtime, RunError> {
    let mut runtime = Runtime::new(case, mode)?;
    for action in &case.scenario.script {
        runtime.step(action)?;
    }
    Ok(runtime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    fn outcome(case: &Case, kind: ControllerKind, options: GateOptions) -> RecoveryOutcome {
        let failed = run_to_failure(case, &case.site, SnapshotMode::RegistryOnly).unwrap();
        recover(kind, case, &failed, options).unwrap()
    }

    fn actions(o: &RecoveryOutcome) -> Vec<&str> {
        o.replay_trace.iter().map(|s| s.action.as_str()).collect()
    }

    #[test]
    fn retry_only_reruns_everything() {
        let case = testkit::case_for(testkit::scenario(), 4);
        let o = outcome(&case, ControllerKind::RetryOnly, GateOptions::default());
        assert_eq!(o.status, Status::Ok);
        assert_eq!(o.replay_trace.len(), 10);
        assert!(!o.recovery_observed);
    }

    #[test]
    fn local_controllers_replay_the_failed_instance() {
        let case = testkit::case_for(testkit::scenario(), 4);
        for kind in [
            ControllerKind::CompEntryOnly,
            ControllerKind::CompFrozen,
            ControllerKind::CoarseStateRetry,
        ] {
            let o = outcome(&case, kind, GateOptions::default());
            assert_eq!(o.status, Status::Ok, "{kind}");
            assert_eq!(actions(&o), vec!["open", "pick"], "{kind}");
            assert!(o.recovery_observed);
            assert_eq!(o.restored_seq, Some(3));
        }
    }

    #[test]
    fn entry_only_refuses_to_cross_irreversible_effect() {
        let case = testkit::case_for(testkit::scenario(), 9);
        let entry = outcome(&case, ControllerKind::CompEntryOnly, GateOptions::default());
        assert_eq!(entry.status, Status::NoRecov);
        assert!(!entry.recovery_observed);
        let coarse = outcome(&case, ControllerKind::CoarseStateRetry, GateOptions::default());
        assert_eq!(coarse.status, Status::NoRecov);
        let frozen = outcome(&case, ControllerKind::CompFrozen, GateOptions::default());
        assert_eq!(frozen.status, Status::Ok);
        assert_eq!(actions(&frozen), vec!["finish"]);
        assert_eq!(
            frozen.restored_checkpoint.as_deref(),
            Some("Assemble::bundle::0#commit@9")
        );
        let t = frozen.terminal.unwrap();
        assert_eq!(t.effects.len(), 1);
        assert!(!t.effect_violation);
    }

    #[test]
    fn guard_off_drops_committed_consumer() {
        let case = testkit::case_for(testkit::interleaved(), 5);
        let on = outcome(&case, ControllerKind::CompFrozen, GateOptions::default());
        assert_eq!(on.status, Status::Blocked);
        assert!(on.terminal.is_none());
        let off = GateOptions {
            consumer_guard: false,
            ..GateOptions::default()
        };
        let o = outcome(&case, ControllerKind::CompFrozen, off);
        assert_eq!(o.dropped_consumers, vec![InstanceId::new("Assemble", "bundle", 0)]);
        assert_eq!(actions(&o), vec!["close"]);
        assert_eq!(o.status, Status::Contract);
        assert!(!o.terminal.unwrap().memory.contains_key("bundle"));
    }

    #[test]
    fn fallback_reruns_when_declared() {
        let mut case = testkit::case_for(testkit::interleaved(), 5);
        case.fallback_allowed = true;
        let o = outcome(&case, ControllerKind::CompFrozen, GateOptions::default());
        assert_eq!(o.status, Status::Ok);
        assert_eq!(o.replay_trace.len(), 6);
        assert!(!o.recovery_observed);
    }

    #[test]
    fn forced_restore_across_irreversible_effect_duplicates_it() {
        let case = testkit::case_for(testkit::scenario(), 9);
        let failed = run_to_failure(&case, &case.site, SnapshotMode::Inline).unwrap();
        let o = forced_restore(&case, &failed, "Assemble::bundle::0#entry@6").unwrap();
        let t = o.terminal.unwrap();
        assert!(t.effect_violation);
        assert!(!t.audit_ready());
        assert_eq!(o.status, Status::Contract);
    }

    #[test]
    fn modes_agree() {
        for seq in [4, 9] {
            let case = testkit::case_for(testkit::scenario(), seq);
            for kind in ControllerKind::ALL {
                let a = recover(
                    *kind,
                    &case,
                    &run_to_failure(&case, &case.site, SnapshotMode::RegistryOnly).unwrap(),
                    GateOptions::default(),
                )
                .unwrap();
                let b = recover(
                    *kind,
                    &case,
                    &run_to_failure(&case, &case.site, SnapshotMode::Inline).unwrap(),
                    GateOptions::default(),
                )
                .unwrap();
                assert_eq!(a.status, b.status);
                assert_eq!(a.replay_trace, b.replay_trace);
                assert_eq!(a.terminal.map(|t| t.memory), b.terminal.map(|t| t.memory));
            }
        }
    }
}
