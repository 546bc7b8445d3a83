//! Semantic audit of a recovered terminal against the golden run.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::case::Case;
use crate::controllers::{RecoveryOutcome, Runtime, Terminal};
use crate::engine::{Key, Memory, Value};
use crate::sidecar::InstanceId;

/// `None` marks a check outside the domain's audit profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub comparable: bool,
    pub semantic_match: Option<bool>,
    pub prefix_exact: Option<bool>,
    pub effect_exact: Option<bool>,
    pub committed_prefix_exact: Option<bool>,
    pub safe_equivalent: bool,
}

impl AuditRow {
    pub fn non_comparable() -> Self {
        Self {
            comparable: false,
            semantic_match: None,
            prefix_exact: None,
            effect_exact: None,
            committed_prefix_exact: None,
            safe_equivalent: false,
        }
    }
}

/// Golden reference for one case: the uninterrupted run.
pub struct Golden {
    pub runtime: Runtime,
}

impl Golden {
    /// Memory just before position `seq` executed.
    pub fn memory_at(&self, case: &Case, seq: u64) -> Memory {
        let mut memory = case.scenario.initial_memory.clone();
        for step in &self.runtime.agent.history()[..seq as usize] {
            step.apply(&mut memory);
        }
        memory
    }

    fn effect_log(&self) -> Vec<(String, Value)> {
        effect_log(&self.runtime.effects)
    }
}

fn effect_log(effects: &[crate::controllers::EffectEntry]) -> Vec<(String, Value)> {
    let mut log: Vec<(String, Value)> = effects.iter().map(|e| (e.tag.clone(), e.payload.clone())).collect();
    log.sort();
    log
}

/// Output keys of instances completed before the failure, excluding the
/// failed one.
fn prefix_keys(case: &Case, completed_before: &[InstanceId], failed: Option<&InstanceId>) -> BTreeSet<Key> {
    completed_before
        .iter()
        .filter(|i| Some(*i) != failed)
        .filter_map(|i| case.configs.get(&i.skeleton).map(|c| c.output_keys_for(&i.entity)))
        .flatten()
        .collect()
}

fn same(keys: &BTreeSet<Key>, a: &Memory, b: &Memory) -> bool {
    keys.iter().all(|k| a.get(k) == b.get(k))
}

pub fn semantic_audit(
    case: &Case,
    terminal: Option<&Terminal>,
    completed_before: &[InstanceId],
    failed: Option<&InstanceId>,
    failure_seq: u64,
    golden: &Golden,
) -> AuditRow {
    let Some(t) = terminal.filter(|t| t.audit_ready()) else {
        return AuditRow::non_comparable();
    };
    let profile = case.audit_profile();
    let g = golden.runtime.agent.memory();
    let keys = prefix_keys(case, completed_before, failed);
    let check = |on: bool, f: &dyn Fn() -> bool| on.then(f);
    let semantic_match = check(profile.semantic, &|| case.project(&t.memory) == case.project(g));
    let prefix_exact = check(profile.prefix, &|| same(&keys, &t.memory, g));
    let effect_exact = check(profile.effect, &|| effect_log(&t.effects) == golden.effect_log());
    let committed_prefix_exact = check(profile.committed_prefix, &|| {
        same(&keys, &t.memory, &golden.memory_at(case, failure_seq))
    });
    let safe_equivalent = [semantic_match, prefix_exact, effect_exact, committed_prefix_exact]
        .iter()
        .all(|c| c.unwrap_or(true));
    AuditRow {
        comparable: true,
        semantic_match,
        prefix_exact,
        effect_exact,
        committed_prefix_exact,
        safe_equivalent,
    }
}

pub fn audit_outcome(case: &Case, outcome: &RecoveryOutcome, failure_seq: u64, golden: &Golden) -> AuditRow {
    semantic_audit(
        case,
        outcome.terminal.as_ref(),
        &outcome.completed_before,
        outcome.failed_instance.as_ref(),
        failure_seq,
        golden,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::golden_run;
    use crate::domains;
    use crate::sidecar::SnapshotMode;

    fn terminal_of(rt: &Runtime) -> Terminal {
        Terminal {
            state: rt.agent.current_state().to_string(),
            memory: rt.agent.memory().clone(),
            effects: rt.effects.clone(),
            complete: true,
            effect_violation: rt.effect_violation,
        }
    }

    #[test]
    fn identical_runs_are_safe_equivalent() {
        for case in domains::universe() {
            let golden = Golden {
                runtime: golden_run(&case, SnapshotMode::RegistryOnly).unwrap(),
            };
            let t = terminal_of(&golden.runtime);
            let row = semantic_audit(&case, Some(&t), &[], None, case.site.seq, &golden);
            assert!(row.comparable && row.safe_equivalent, "{}", case.id);
        }
    }

    #[test]
    fn missing_terminal_or_violation_is_non_comparable() {
        let case = &domains::etl::commit_sensitive()[0];
        let golden = Golden {
            runtime: golden_run(case, SnapshotMode::RegistryOnly).unwrap(),
        };
        assert!(!semantic_audit(case, None, &[], None, 0, &golden).comparable);
        let mut t = terminal_of(&golden.runtime);
        t.effect_violation = true;
        assert!(!semantic_audit(case, Some(&t), &[], None, 0, &golden).comparable);
    }

    #[test]
    fn changed_golden_key_fails_semantics() {
        let case = &domains::schedule::commit_sensitive()[0];
        let golden = Golden {
            runtime: golden_run(case, SnapshotMode::RegistryOnly).unwrap(),
        };
        let mut t = terminal_of(&golden.runtime);
        t.memory.insert("slot[0].value".into(), "Thursday 10:00".into());
        let row = semantic_audit(case, Some(&t), &[], None, 0, &golden);
        assert_eq!(row.semantic_match, Some(false));
        assert!(!row.safe_equivalent);
    }
}
