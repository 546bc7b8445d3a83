//! Parallel execution of the case universe across controllers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::case::{Case, ControllerKind, Domain, Regime, Status};
use crate::controllers::{golden_run, recover, run_to_failure, RecoveryOutcome, RunError};
use crate::domains::REPEAT;
use crate::engine::FailureSignal;
use crate::gate::{BlockedReason, GateOptions};
use crate::scenario::FailureSite;
use crate::sidecar::{InstanceId, Lifecycle, SnapshotMode};

use super::audit::{audit_outcome, AuditRow, Golden};
use super::metrics::{compute_metrics, upstream_set, Frontier};
use super::oracle::GoldenTrace;

/// Signals a repeat may draw; all normalize to the same boundary.
pub const REPEAT_SIGNALS: [FailureSignal; 3] = [
    FailureSignal::Timeout,
    FailureSignal::InvalidOutput,
    FailureSignal::MissingInput,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub repeat: u32,
    pub mode: SnapshotMode,
    pub options: GateOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            repeat: REPEAT,
            mode: SnapshotMode::RegistryOnly,
            options: GateOptions::default(),
        }
    }
}

/// Deterministic signal for one repeat.
pub fn signal_for(seed: u64, case_id: &str, repeat: u32) -> FailureSignal {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(case_id.as_bytes())
        .chain_update(repeat.to_le_bytes())
        .finalize();
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    *REPEAT_SIGNALS.choose(&mut rng).expect("non-empty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub domain: Domain,
    pub regime: Regime,
    pub case: String,
    pub repeat: u32,
    pub controller: ControllerKind,
    pub signal: FailureSignal,
    pub status: Status,
    #[serde(flatten)]
    pub frontier: Frontier,
    pub recovery_observed: bool,
    pub failed_instance: Option<InstanceId>,
    pub restored_instance: Option<InstanceId>,
    pub restored_lifecycle: Option<Lifecycle>,
    pub blocked_reason: Option<BlockedReason>,
    pub restore_cost: usize,
    /// Replay length predicted from the golden trace.
    pub oracle_replay: u64,
    /// Golden steps owned by instances completed before the failure.
    pub completed_prefix_steps: u64,
    pub audit: AuditRow,
}

/// A case with its golden run, computed once and shared by every repeat.
pub struct Prepared {
    pub case: Case,
    pub golden: Golden,
}

impl Prepared {
    pub fn new(case: Case, mode: SnapshotMode) -> Result<Self, RunError> {
        let runtime = golden_run(&case, mode)?;
        Ok(Self {
            case,
            golden: Golden { runtime },
        })
    }

    pub fn site(&self, repeat: u32, seed: u64) -> FailureSite {
        FailureSite {
            signal: signal_for(seed, &self.case.id, repeat),
            ..self.case.site.clone()
        }
    }
}

/// Run one controller on one repeat; returns the record and raw outcome.
pub fn run_one(
    p: &Prepared,
    repeat: u32,
    controller: ControllerKind,
    cfg: &RunConfig,
) -> Result<(RunRecord, RecoveryOutcome), RunError> {
    let case = &p.case;
    let site = p.site(repeat, cfg.seed);
    let failed = run_to_failure(case, &site, cfg.mode)?;
    let outcome = recover(controller, case, &failed, cfg.options)?;
    let restored = outcome
        .restored_checkpoint
        .as_deref()
        .and_then(|id| failed.runtime.sidecar.checkpoint(id));
    let f = failed.failure.step;
    let trace = GoldenTrace {
        golden: &p.golden.runtime,
    };
    let oracle_replay = match (&outcome.failed_instance, outcome.status) {
        (Some(id), Status::Ok) => trace.expected_replay(controller, id, f, outcome.restored_seq),
        _ => outcome.replay_trace.len() as u64,
    };
    let upstream: Vec<&InstanceId> = upstream_set(&outcome).into_iter().collect();
    let record = RunRecord {
        domain: case.domain,
        regime: case.regime,
        case: case.id.clone(),
        repeat,
        controller,
        signal: site.signal,
        status: outcome.status,
        frontier: compute_metrics(&outcome),
        recovery_observed: outcome.recovery_observed,
        failed_instance: outcome.failed_instance.clone(),
        restored_instance: restored.map(|c| c.instance.clone()),
        restored_lifecycle: restored.map(|c| c.lifecycle),
        blocked_reason: outcome.decision.as_ref().and_then(|d| d.blocked_reason()),
        restore_cost: outcome.restore_cost,
        oracle_replay,
        completed_prefix_steps: trace.upstream_steps(&upstream),
        audit: audit_outcome(case, &outcome, f, &p.golden),
    };
    Ok((record, outcome))
}

pub fn prepare(cases: Vec<Case>, mode: SnapshotMode) -> Result<Vec<Prepared>, RunError> {
    cases.into_par_iter().map(|c| Prepared::new(c, mode)).collect()
}

/// Every (case, repeat, controller) triple, in that nesting order.
pub fn run_universe(
    prepared: &[Prepared],
    controllers: &[ControllerKind],
    cfg: &RunConfig,
) -> Result<Vec<RunRecord>, RunError> {
    let jobs: Vec<(usize, u32, ControllerKind)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(i, _)| (0..cfg.repeat).flat_map(move |r| controllers.iter().map(move |c| (i, r, *c))))
        .collect();
    jobs.into_par_iter()
        .map(|(i, r, c)| run_one(&prepared[i], r, c, cfg).map(|(rec, _)| rec))
        .collect()
}
