//! Committed-consumer guard-off and wrong-boundary ablations.

use serde::{Deserialize, Serialize};

use crate::case::{Case, ControllerKind, Domain, Status, WitnessCase};
use crate::contracts::Edge;
use crate::controllers::{golden_run, recover, run_to_failure, RunError, Runtime, Terminal};
use crate::domains::WrongBoundary;
use crate::gate::{certify_boundary, certify_forced_exit, BlockedReason, BoundaryCandidate, GateOptions};
use crate::sidecar::{InstanceId, InstanceKey, Lifecycle, SnapshotMode};

use super::audit::{semantic_audit, Golden};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardOffRow {
    pub domain: Domain,
    pub case: String,
    pub guard_on_status: Status,
    pub guard_on_reason: Option<BlockedReason>,
    pub dropped: Vec<InstanceId>,
    pub expected_dropped: usize,
    pub guard_off_status: Status,
    pub guard_off_safe_equivalent: bool,
}

pub fn guard_off(w: &WitnessCase, mode: SnapshotMode) -> Result<GuardOffRow, RunError> {
    let case = &w.case;
    let golden = Golden {
        runtime: golden_run(case, mode)?,
    };
    let failed = run_to_failure(case, &case.site, mode)?;
    let on = recover(ControllerKind::CompFrozen, case, &failed, GateOptions::default())?;
    let off_options = GateOptions {
        consumer_guard: false,
        ..GateOptions::default()
    };
    let off = recover(ControllerKind::CompFrozen, case, &failed, off_options)?;
    let audit = semantic_audit(
        case,
        off.terminal.as_ref(),
        &off.completed_before,
        off.failed_instance.as_ref(),
        failed.failure.step,
        &golden,
    );
    Ok(GuardOffRow {
        domain: case.domain,
        case: case.id.clone(),
        guard_on_status: on.status,
        guard_on_reason: on.decision.as_ref().and_then(|d| d.blocked_reason()),
        dropped: off.dropped_consumers.clone(),
        expected_dropped: w.expected_dropped,
        guard_off_status: off.status,
        guard_off_safe_equivalent: audit.safe_equivalent,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub domain: Domain,
    pub edge: String,
    pub reviewed: bool,
    pub decidable: bool,
    pub closed: bool,
    pub separable: bool,
    pub controllable: bool,
    pub certified: bool,
    /// Restoring the exit checkpoint and resuming passes the semantic audit.
    pub restore_safe: bool,
}

fn edge_label(e: &Edge) -> String {
    format!("{}->{}", e.from, e.to)
}

/// Run `case` to its failure site, restore `exit` and resume the rest of
/// the script from there.
fn resume_through(
    case: &Case,
    mut rt: Runtime,
    exit: &str,
    reviewed: &Case,
    golden: &Golden,
) -> Result<bool, RunError> {
    let f = case.site.seq;
    let (seq, _) = rt.restore_checkpoint(exit)?;
    let mut complete = true;
    for action in &case.scenario.script[seq as usize..] {
        if rt.step(action).is_err() {
            complete = false;
            break;
        }
    }
    let terminal = Terminal {
        state: rt.agent.current_state().to_string(),
        memory: rt.agent.memory().clone(),
        effects: rt.effects.clone(),
        complete,
        effect_violation: rt.effect_violation,
    };
    Ok(semantic_audit(reviewed, Some(&terminal), &[], None, f, golden).safe_equivalent)
}

fn step_until(case: &Case, rt: &mut Runtime, end: u64) -> Result<(), RunError> {
    for action in &case.scenario.script[rt.agent.history().len()..end as usize] {
        rt.step(action)?;
    }
    Ok(())
}

/// Force the wrong edge as an exit on the variant, and use the reviewed
/// exit on the control. Both are audited against the reviewed golden run.
pub fn wrong_boundary(wb: &WrongBoundary, mode: SnapshotMode) -> Result<[BoundaryRow; 2], RunError> {
    let golden = Golden {
        runtime: golden_run(&wb.control, mode)?,
    };

    let variant = &wb.variant;
    let mut rt = Runtime::new(variant, mode)?;
    step_until(variant, &mut rt, wb.skip_seq + 1)?;
    let instance = rt.sidecar.lifted()[wb.skip_seq as usize].instance.clone();
    let memory = rt.agent.memory().clone();
    let exit = rt
        .sidecar
        .force_exit(&instance, wb.skip_seq + 1, &memory)
        .map_err(RunError::from)?;
    let cert = certify_forced_exit(&wb.wrong_edge.from, &wb.wrong_edge.to, &instance, &rt.sidecar, &memory);
    step_until(variant, &mut rt, variant.site.seq)?;
    let wrong = BoundaryRow {
        domain: wb.domain,
        edge: edge_label(&wb.wrong_edge),
        reviewed: false,
        decidable: cert.decidable,
        closed: cert.closed,
        separable: cert.separable,
        controllable: cert.controllable,
        certified: cert.certified,
        restore_safe: resume_through(variant, rt, &exit, &wb.control, &golden)?,
    };

    let control = &wb.control;
    let mut rt = Runtime::new(control, mode)?;
    let mut cert = None;
    let mut exit = None;
    for action in &control.scenario.script[..control.site.seq as usize] {
        let lifted = rt.step(action)?;
        let base = &lifted.base;
        if exit.is_none() && base.from_state == wb.reviewed_edge.from && base.to_state == wb.reviewed_edge.to {
            let id = lifted.instance.clone();
            let c = certify_boundary(
                &BoundaryCandidate::Exit {
                    from: base.from_state.clone(),
                    to: base.to_state.clone(),
                },
                &InstanceKey::Full(id.clone()),
                &id.skeleton,
                &rt.sidecar,
                rt.agent.current_state(),
                rt.agent.memory(),
            )
            .expect("reviewed edge");
            exit = rt
                .sidecar
                .checkpoints_of(&id)
                .into_iter()
                .find(|c| c.lifecycle == Lifecycle::Exit)
                .map(|c| c.id.clone());
            cert = Some(c);
        }
    }
    let cert = cert.expect("control takes the reviewed edge");
    let exit = exit.expect("reviewed exit checkpoint");
    let reviewed = BoundaryRow {
        domain: wb.domain,
        edge: edge_label(&wb.reviewed_edge),
        reviewed: true,
        decidable: cert.decidable,
        closed: cert.closed,
        separable: cert.separable,
        controllable: cert.controllable,
        certified: cert.certified,
        restore_safe: resume_through(control, rt, &exit, &wb.control, &golden)?,
    };
    Ok([wrong, reviewed])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;

    #[test]
    fn guard_off_drops_declared_consumers() {
        for w in domains::witnesses() {
            let row = guard_off(&w, SnapshotMode::RegistryOnly).unwrap();
            assert_eq!(row.guard_on_status, Status::Blocked);
            assert_eq!(row.guard_on_reason, Some(BlockedReason::CommittedConsumersPresent));
            assert_eq!(row.dropped.len(), w.expected_dropped, "{}", row.case);
            assert!(!row.guard_off_safe_equivalent, "{}", row.case);
        }
    }

    #[test]
    fn wrong_edges_fail_and_reviewed_exits_pass() {
        for wb in domains::wrong_boundaries() {
            for mode in SnapshotMode::ALL {
                let [wrong, reviewed] = wrong_boundary(&wb, mode).unwrap();
                assert!(!wrong.closed && !wrong.certified && !wrong.restore_safe, "{wrong:?}");
                assert!(reviewed.certified && reviewed.restore_safe, "{reviewed:?}");
            }
        }
    }
}
