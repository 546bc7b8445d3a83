//! Boundary certification and admissible rollback selection.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::{EffectClass, SkeletonConfig};
use crate::engine::{FailureEvent, Memory, StateId};
use crate::sidecar::{Checkpoint, InstanceId, InstanceKey, Lifecycle, Localization, Sidecar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOptions {
    pub allow_exit_restore: bool,
    /// Committed-consumer veto. Disabled only by the guard-off ablation.
    pub consumer_guard: bool,
}

impl Default for GateOptions {
    fn default() -> Self {
        Self {
            allow_exit_restore: false,
            consumer_guard: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCandidate {
    Commit { predicate: String },
    Exit { from: StateId, to: StateId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCertification {
    pub candidate: BoundaryCandidate,
    pub instance: Option<InstanceId>,
    pub decidable: bool,
    pub closed: bool,
    pub separable: bool,
    pub controllable: bool,
    pub certified: bool,
}

impl BoundaryCertification {
    fn new(
        candidate: BoundaryCandidate,
        instance: Option<InstanceId>,
        decidable: bool,
        closed: bool,
        separable: bool,
        controllable: bool,
    ) -> Self {
        Self {
            candidate,
            instance,
            decidable,
            closed,
            separable,
            controllable,
            certified: decidable && closed && separable && controllable,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GateError {
    #[error("candidate {0} is not a reviewed boundary")]
    NotReviewed(String),
    #[error("unknown skeleton {0}")]
    UnknownSkeleton(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockedReason {
    UnidentifiedInstance,
    NoStableCheckpoint,
    ScopeViolation,
    CommittedConsumersPresent,
    IrreversibleEffectPolicy,
}

impl BlockedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockedReason::UnidentifiedInstance => "unidentified_instance",
            BlockedReason::NoStableCheckpoint => "no_stable_checkpoint",
            BlockedReason::ScopeViolation => "scope_violation",
            BlockedReason::CommittedConsumersPresent => "committed_consumers_present",
            BlockedReason::IrreversibleEffectPolicy => "irreversible_effect_policy",
        }
    }

    /// Reason family used in calibration summaries.
    pub fn family(self) -> &'static str {
        match self {
            BlockedReason::CommittedConsumersPresent => "dependency",
            BlockedReason::IrreversibleEffectPolicy => "effect",
            BlockedReason::ScopeViolation => "scope",
            BlockedReason::NoStableCheckpoint | BlockedReason::UnidentifiedInstance => "identity",
        }
    }
}

impl fmt::Display for BlockedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-checkpoint veto results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VetoResult {
    pub checkpoint: String,
    pub lifecycle: Lifecycle,
    pub seq: u64,
    pub stable: bool,
    pub scope_ok: bool,
    pub no_committed_conflict: bool,
    pub effect_allowed: bool,
    pub consumers: Vec<InstanceId>,
}

impl VetoResult {
    pub fn admissible(&self) -> bool {
        self.stable && self.scope_ok && self.no_committed_conflict && self.effect_allowed
    }

    /// Highest-priority veto that rejected this checkpoint.
    pub fn reason(&self) -> Option<BlockedReason> {
        if !self.no_committed_conflict {
            Some(BlockedReason::CommittedConsumersPresent)
        } else if !self.effect_allowed {
            Some(BlockedReason::IrreversibleEffectPolicy)
        } else if !self.scope_ok {
            Some(BlockedReason::ScopeViolation)
        } else if !self.stable {
            Some(BlockedReason::NoStableCheckpoint)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Eligible { checkpoint: String },
    Blocked { reason: BlockedReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryDecision {
    pub failure: FailureEvent,
    pub instance: Option<InstanceId>,
    pub outcome: Outcome,
    /// Every checkpoint of the failed instance, recency-ordered.
    pub evaluated: Vec<VetoResult>,
}

impl RecoveryDecision {
    pub fn eligible(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Eligible { checkpoint } => Some(checkpoint),
            Outcome::Blocked { .. } => None,
        }
    }

    pub fn blocked_reason(&self) -> Option<BlockedReason> {
        match &self.outcome {
            Outcome::Blocked { reason } => Some(*reason),
            Outcome::Eligible { .. } => None,
        }
    }
}

/// Committed or exited consumers of `instance`.
pub fn committed_conflict(instance: &InstanceId, sidecar: &Sidecar) -> (bool, Vec<InstanceId>) {
    let witnesses: Vec<InstanceId> = sidecar
        .dependency_edges()
        .into_iter()
        .filter(|e| &e.producer == instance)
        .filter(|e| sidecar.instance(&e.consumer).is_some_and(|q| q.status.is_completed()))
        .map(|e| e.consumer)
        .collect();
    (!witnesses.is_empty(), witnesses)
}

/// Committed consumers whose work a restore to `c` would rewind.
fn conflicting_consumers(instance: &InstanceId, c: &Checkpoint, sidecar: &Sidecar) -> Vec<InstanceId> {
    committed_conflict(instance, sidecar)
        .1
        .into_iter()
        .filter(|q| sidecar.instance(q).is_some_and(|r| r.has_steps_since(c.seq)))
        .collect()
}

/// False iff rolling back to `c` would cross a disallowed effect.
pub fn effect_allowed(c: &Checkpoint, sidecar: &Sidecar) -> bool {
    let actions = &sidecar.configs().manifest().actions;
    sidecar.emissions().into_iter().filter(|e| e.seq >= c.seq).all(|e| {
        match sidecar.configs().effect_rule(&e.instance.skeleton, &e.tag) {
            Some(rule) => match rule.class {
                EffectClass::Reversible => true,
                EffectClass::Compensable => rule.compensation.as_ref().is_some_and(|a| actions.contains(a)),
                EffectClass::Irreversible => false,
            },
            None => false,
        }
    })
}

fn scope_ok(instance: &InstanceId, c: &Checkpoint, sidecar: &Sidecar, options: GateOptions) -> bool {
    if &c.instance != instance {
        return false;
    }
    if c.lifecycle == Lifecycle::Exit && !options.allow_exit_restore {
        return false;
    }
    let (_, committed) = committed_conflict(instance, sidecar);
    sidecar
        .instances()
        .iter()
        .filter(|i| &i.id != instance && !committed.contains(&i.id))
        .all(|i| !i.has_steps_since(c.seq))
}

pub fn evaluate_checkpoint(
    failure: &FailureEvent,
    instance: &InstanceId,
    c: &Checkpoint,
    sidecar: &Sidecar,
    options: GateOptions,
) -> VetoResult {
    let consumers = conflicting_consumers(instance, c, sidecar);
    VetoResult {
        checkpoint: c.id.clone(),
        lifecycle: c.lifecycle,
        seq: c.seq,
        stable: c.closed && c.seq <= failure.step,
        scope_ok: scope_ok(instance, c, sidecar, options),
        no_committed_conflict: !options.consumer_guard || consumers.is_empty(),
        effect_allowed: effect_allowed(c, sidecar),
        consumers,
    }
}

/// Latest admissible checkpoint of the failed instance, or a blocked reason.
pub fn select_rollback(
    failure: &FailureEvent,
    entity: &str,
    sidecar: &Sidecar,
    options: GateOptions,
) -> RecoveryDecision {
    let instance = match sidecar.localize(failure, entity) {
        Localization::Unique(id) => id,
        Localization::Abstain(_) => {
            return RecoveryDecision {
                failure: failure.clone(),
                instance: None,
                outcome: Outcome::Blocked {
                    reason: BlockedReason::UnidentifiedInstance,
                },
                evaluated: Vec::new(),
            }
        }
    };
    let evaluated: Vec<VetoResult> = sidecar
        .checkpoints_of(&instance)
        .into_iter()
        .map(|c| evaluate_checkpoint(failure, &instance, c, sidecar, options))
        .collect();
    let outcome = decide(&evaluated);
    RecoveryDecision {
        failure: failure.clone(),
        instance: Some(instance),
        outcome,
        evaluated,
    }
}

/// Recency-maximal admissible member, else the dominant veto.
pub fn decide(evaluated: &[VetoResult]) -> Outcome {
    match evaluated.iter().rev().find(|v| v.admissible()) {
        Some(v) => Outcome::Eligible {
            checkpoint: v.checkpoint.clone(),
        },
        None => Outcome::Blocked {
            reason: evaluated
                .iter()
                .filter_map(VetoResult::reason)
                .max_by_key(|r| reason_priority(*r))
                .unwrap_or(BlockedReason::NoStableCheckpoint),
        },
    }
}

fn reason_priority(reason: BlockedReason) -> u8 {
    match reason {
        BlockedReason::CommittedConsumersPresent => 4,
        BlockedReason::IrreversibleEffectPolicy => 3,
        BlockedReason::ScopeViolation => 2,
        BlockedReason::NoStableCheckpoint => 1,
        BlockedReason::UnidentifiedInstance => 0,
    }
}

fn outputs_present(config: &SkeletonConfig, entity: &str, memory: &Memory) -> bool {
    config.output_keys_for(entity).iter().all(|k| memory.contains_key(k))
}

/// Four-conjunct certification of a reviewed commit or exit point.
pub fn certify_boundary(
    candidate: &BoundaryCandidate,
    key: &InstanceKey,
    skeleton: &str,
    sidecar: &Sidecar,
    state: &str,
    memory: &Memory,
) -> Result<BoundaryCertification, GateError> {
    let config = sidecar
        .configs()
        .get(skeleton)
        .ok_or_else(|| GateError::UnknownSkeleton(skeleton.to_string()))?;
    let (predicate, lifecycle) = match candidate {
        BoundaryCandidate::Commit { predicate } => (
            config
                .commit_predicates
                .iter()
                .find(|p| &p.name == predicate)
                .ok_or_else(|| GateError::NotReviewed(predicate.clone()))?,
            Lifecycle::Commit,
        ),
        BoundaryCandidate::Exit { from, to } => {
            if config.pending.iter().any(|e| &e.from == from && &e.to == to) {
                return Ok(BoundaryCertification::new(
                    candidate.clone(),
                    None,
                    false,
                    false,
                    false,
                    false,
                ));
            }
            (
                &config
                    .exit_for(from, to)
                    .ok_or_else(|| GateError::NotReviewed(format!("{from}->{to}")))?
                    .predicate,
                Lifecycle::Exit,
            )
        }
    };
    let matches = sidecar.resolve_key(key);
    let instance = match matches.as_slice() {
        [one] => Some(one.clone()),
        _ => None,
    };
    let Some(id) = instance.clone() else {
        return Ok(BoundaryCertification::new(
            candidate.clone(),
            None,
            false,
            false,
            false,
            false,
        ));
    };
    let closed = predicate.predicate.evaluate(state, memory, &id.entity) && outputs_present(config, &id.entity, memory);
    let checkpoint = sidecar
        .checkpoints_of(&id)
        .into_iter()
        .rev()
        .find(|c| c.lifecycle == lifecycle);
    let separable = checkpoint.is_some_and(|c| c.instance == id);
    let controllable = checkpoint.is_some_and(|c| effect_allowed(c, sidecar));
    Ok(BoundaryCertification::new(
        candidate.clone(),
        Some(id),
        true,
        closed,
        separable,
        controllable,
    ))
}

/// Certification of an arbitrary legal edge forced as an exit, bypassing
/// review. Used by the wrong-boundary ablation.
pub fn certify_forced_exit(
    from: &str,
    to: &str,
    instance: &InstanceId,
    sidecar: &Sidecar,
    memory: &Memory,
) -> BoundaryCertification {
    let candidate = BoundaryCandidate::Exit {
        from: from.into(),
        to: to.into(),
    };
    let Some(config) = sidecar.configs().get(&instance.skeleton) else {
        return BoundaryCertification::new(candidate, None, false, false, false, false);
    };
    let committed = sidecar.instance(instance).is_some_and(|i| i.status.is_completed());
    let decidable = sidecar.resolve_key(&InstanceKey::Full(instance.clone())).len() == 1;
    let closed = committed && outputs_present(config, &instance.entity, memory);
    let checkpoint = sidecar
        .checkpoints_of(instance)
        .into_iter()
        .rev()
        .find(|c| c.lifecycle == Lifecycle::Exit);
    let separable = checkpoint.is_some();
    let controllable = checkpoint.is_some_and(|c| effect_allowed(c, sidecar));
    BoundaryCertification::new(
        candidate,
        Some(instance.clone()),
        decidable,
        closed,
        separable,
        controllable,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AgentModel, FailureSignal};
    use crate::scenario::Scenario;
    use crate::sidecar::SnapshotMode;
    use crate::testkit;
    use proptest::prelude::*;

    fn run(scenario: &Scenario, upto: usize) -> (AgentModel, Sidecar) {
        let mut agent = scenario.agent().unwrap();
        let mut sidecar = Sidecar::new(testkit::configs(), SnapshotMode::RegistryOnly);
        for action in &scenario.script[..upto] {
            let rec = agent.execute_step(&action.action, None, &action.effect).unwrap();
            sidecar.observe(&rec, action, agent.memory()).unwrap();
        }
        (agent, sidecar)
    }

    fn fail_at(scenario: &Scenario, seq: usize, options: GateOptions) -> RecoveryDecision {
        let (mut agent, sidecar) = run(scenario, seq);
        let action = &scenario.script[seq];
        let f = agent.raise(&action.action, FailureSignal::ToolException).unwrap();
        select_rollback(&f, &action.entity, &sidecar, options)
    }

    #[test]
    fn fresh_instance_restores_entry() {
        let d = fail_at(&testkit::scenario(), 4, GateOptions::default());
        assert_eq!(d.eligible(), Some("Pick::item[1]::0#entry@3"));
    }

    #[test]
    fn irreversible_effect_vetoes_entry_but_not_commit() {
        let d = fail_at(&testkit::scenario(), 9, GateOptions::default());
        assert_eq!(d.eligible(), Some("Assemble::bundle::0#commit@9"));
        assert!(!d.evaluated[0].effect_allowed);
        assert!(d.evaluated[1].admissible());
    }

    #[test]
    fn committed_consumer_blocks() {
        let scenario = testkit::interleaved();
        let d = fail_at(&scenario, 5, GateOptions::default());
        assert_eq!(d.blocked_reason(), Some(BlockedReason::CommittedConsumersPresent));
        assert!(d
            .evaluated
            .iter()
            .all(|v| v.consumers == vec![InstanceId::new("Assemble", "bundle", 0)]));

        let (_, sidecar) = run(&scenario, 5);
        let (conflict, witnesses) = committed_conflict(&InstanceId::new("Pick", "item[0]", 0), &sidecar);
        assert!(conflict);
        assert_eq!(witnesses.len(), 1);

        let off = GateOptions {
            consumer_guard: false,
            ..GateOptions::default()
        };
        assert_eq!(fail_at(&scenario, 5, off).eligible(), Some("Pick::item[0]::0#commit@2"));
    }

    #[test]
    fn active_consumer_does_not_conflict() {
        let scenario = testkit::interleaved();
        let (_, sidecar) = run(&scenario, 3);
        let (conflict, _) = committed_conflict(&InstanceId::new("Pick", "item[0]", 0), &sidecar);
        assert!(!conflict);
    }

    #[test]
    fn abstention_is_unidentified() {
        let scenario = testkit::scenario();
        let (mut agent, sidecar) = run(&scenario, 4);
        let f = agent.raise("pick", FailureSignal::Timeout).unwrap();
        let d = select_rollback(&f, "item[7]", &sidecar, GateOptions::default());
        assert_eq!(d.blocked_reason(), Some(BlockedReason::UnidentifiedInstance));
        assert!(d.instance.is_none());
    }

    #[test]
    fn exit_checkpoints_need_opt_in() {
        let scenario = testkit::scenario();
        let (mut agent, sidecar) = run(&scenario, 4);
        let f = agent.raise("pick", FailureSignal::Timeout).unwrap();
        let id = InstanceId::new("Pick", "item[0]", 0);
        let exit = sidecar.checkpoints_of(&id).into_iter().last().unwrap().clone();
        assert_eq!(exit.lifecycle, Lifecycle::Exit);
        let v = evaluate_checkpoint(&f, &id, &exit, &sidecar, GateOptions::default());
        assert!(!v.scope_ok);
        let allow = GateOptions {
            allow_exit_restore: true,
            ..GateOptions::default()
        };
        // item[1] has stepped since the exit, so scope still fails.
        assert!(!evaluate_checkpoint(&f, &id, &exit, &sidecar, allow).scope_ok);
    }

    #[test]
    fn certification_conjuncts() {
        let scenario = testkit::scenario();
        let (agent, sidecar) = run(&scenario, 3);
        let id = InstanceId::new("Pick", "item[0]", 0);
        let commit = BoundaryCandidate::Commit {
            predicate: "picked".into(),
        };
        let cert = certify_boundary(
            &commit,
            &InstanceKey::Full(id.clone()),
            "Pick",
            &sidecar,
            "PICKED",
            agent.memory(),
        )
        .unwrap();
        assert!(cert.certified, "{cert:?}");

        let exit = BoundaryCandidate::Exit {
            from: "PICKED".into(),
            to: "READY".into(),
        };
        let cert = certify_boundary(
            &exit,
            &InstanceKey::Full(id.clone()),
            "Pick",
            &sidecar,
            "READY",
            agent.memory(),
        )
        .unwrap();
        assert!(cert.certified);

        let bogus = BoundaryCandidate::Exit {
            from: "PICKING".into(),
            to: "PICKED".into(),
        };
        assert!(matches!(
            certify_boundary(
                &bogus,
                &InstanceKey::Full(id),
                "Pick",
                &sidecar,
                "PICKED",
                agent.memory()
            ),
            Err(GateError::NotReviewed(_))
        ));
    }

    #[test]
    fn weakened_key_is_not_decidable() {
        let scenario = testkit::scenario();
        let mut agent = scenario.agent().unwrap();
        let mut sidecar = Sidecar::new(testkit::configs(), SnapshotMode::RegistryOnly);
        let reopen = testkit::step("open", "item[0]", &[]);
        let pick = testkit::step("pick", "item[0]", &[("item[0].value", Some("plum".into()))]);
        for action in scenario.script[..3].iter().chain([&reopen, &pick]) {
            let rec = agent.execute_step(&action.action, None, &action.effect).unwrap();
            sidecar.observe(&rec, action, agent.memory()).unwrap();
        }
        let key = InstanceKey::DropOrdinal {
            skeleton: "Pick".into(),
            entity: "item[0]".into(),
        };
        let commit = BoundaryCandidate::Commit {
            predicate: "picked".into(),
        };
        let cert = certify_boundary(&commit, &key, "Pick", &sidecar, "PICKED", agent.memory()).unwrap();
        assert!(!cert.decidable && !cert.certified);
        let full = InstanceKey::Full(InstanceId::new("Pick", "item[0]", 1));
        assert!(
            certify_boundary(&commit, &full, "Pick", &sidecar, "PICKED", agent.memory())
                .unwrap()
                .certified
        );
    }

    #[test]
    fn forced_exit_is_not_closed() {
        let scenario = testkit::scenario();
        let (agent, mut sidecar) = run(&scenario, 1);
        let id = InstanceId::new("Pick", "item[0]", 0);
        sidecar.force_exit(&id, 1, agent.memory()).unwrap();
        let cert = certify_forced_exit("PICKING", "READY", &id, &sidecar, agent.memory());
        assert!(!cert.closed);
        assert!(!cert.certified);
    }

    fn veto(seq: u64, mask: [bool; 4]) -> VetoResult {
        VetoResult {
            checkpoint: format!("c@{seq}"),
            lifecycle: Lifecycle::Commit,
            seq,
            stable: mask[0],
            scope_ok: mask[1],
            no_committed_conflict: mask[2],
            effect_allowed: mask[3],
            consumers: vec![],
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn selection_matches_brute_force(masks in proptest::collection::vec(any::<[bool; 4]>(), 0..8)) {
            let evaluated: Vec<VetoResult> = masks.iter().enumerate().map(|(i, m)| veto(i as u64 * 3, *m)).collect();
            let mut expected = None;
            for i in (0..masks.len()).rev() {
                if masks[i].iter().all(|b| *b) {
                    expected = Some(format!("c@{}", i * 3));
                    break;
                }
            }
            match (decide(&evaluated), expected) {
                (Outcome::Eligible { checkpoint }, Some(e)) => {
                    prop_assert_eq!(&checkpoint, &e);
                    let pos = evaluated.iter().position(|v| v.checkpoint == checkpoint).unwrap();
                    prop_assert!(evaluated[pos + 1..].iter().all(|v| !v.admissible()));
                }
                (Outcome::Blocked { reason }, None) => {
                    let want = if masks.iter().any(|m| !m[2]) {
                        BlockedReason::CommittedConsumersPresent
                    } else if masks.iter().any(|m| !m[3]) {
                        BlockedReason::IrreversibleEffectPolicy
                    } else if masks.iter().any(|m| !m[1]) {
                        BlockedReason::ScopeViolation
                    } else {
                        BlockedReason::NoStableCheckpoint
                    };
                    prop_assert_eq!(reason, want);
                }
                (got, want) => prop_assert!(false, "got {:?}, want {:?}", got, want),
            }
        }

        #[test]
        fn vetoes_are_monotone(masks in proptest::collection::vec(any::<[bool; 4]>(), 1..8), idx in 0usize..8, which in 2usize..4) {
            let evaluated: Vec<VetoResult> = masks.iter().enumerate().map(|(i, m)| veto(i as u64, *m)).collect();
            let mut stricter = masks.clone();
            let i = idx % masks.len();
            stricter[i][which] = false;
            let stricter: Vec<VetoResult> = stricter.iter().enumerate().map(|(i, m)| veto(i as u64, *m)).collect();
            let before = evaluated.iter().filter(|v| v.admissible()).count();
            let after = stricter.iter().filter(|v| v.admissible()).count();
            prop_assert!(after <= before);
        }
    }
}
