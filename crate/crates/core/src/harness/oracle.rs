//! Replay counts derived from the golden trace alone, used to cross-check
//! the controllers' replay traces.

use crate::case::ControllerKind;
use crate::controllers::Runtime;
use crate::engine::StateId;
use crate::sidecar::{InstanceId, Lifecycle};

/// Golden-run facts the oracle needs.
pub struct GoldenTrace<'a> {
    pub golden: &'a Runtime,
}

impl GoldenTrace<'_> {
    fn len(&self) -> u64 {
        self.golden.agent.history().len() as u64
    }

    fn state_at(&self, seq: u64) -> StateId {
        self.golden.state_at(seq)
    }

    /// Last position executed before `id` first counts as completed at or
    /// after `f`.
    fn milestone(&self, id: &InstanceId, f: u64) -> u64 {
        let done = self
            .golden
            .sidecar
            .checkpoints_of(id)
            .into_iter()
            .filter(|c| matches!(c.lifecycle, Lifecycle::Commit | Lifecycle::Exit))
            .map(|c| c.seq)
            .min();
        match done {
            Some(c) => (c.saturating_sub(1)).max(f),
            None => self.len() - 1,
        }
    }

    /// Steps re-executed before `f` from `positions`, dropping those that only
    /// navigate back into the state already reached.
    fn prefix(&self, start: u64, positions: impl Iterator<Item = u64>) -> u64 {
        let history = self.golden.agent.history();
        let mut here = self.state_at(start);
        let mut n = 0;
        for p in positions {
            let step = &history[p as usize];
            if step.from_state != here && step.to_state == here && step.memory_delta.is_empty() {
                continue;
            }
            here = step.to_state.clone();
            n += 1;
        }
        n
    }

    /// Expected replay length of a successful recovery that restored to
    /// `restored` (None for no restore).
    pub fn expected_replay(&self, kind: ControllerKind, failed: &InstanceId, f: u64, restored: Option<u64>) -> u64 {
        let Some(start) = restored else {
            return 0;
        };
        let tail = self.milestone(failed, f) - f + 1;
        match kind {
            ControllerKind::RetryOnly => self.len(),
            ControllerKind::CoarseStateRetry => self.prefix(start, start..f) + tail,
            ControllerKind::CompEntryOnly | ControllerKind::CompFrozen => {
                let own: Vec<u64> = self
                    .golden
                    .sidecar
                    .lifted()
                    .iter()
                    .filter(|l| &l.instance == failed && l.base.seq >= start && l.base.seq < f)
                    .map(|l| l.base.seq)
                    .collect();
                self.prefix(start, own.into_iter()) + tail
            }
        }
    }

    /// Golden steps owned by instances in `upstream`.
    pub fn upstream_steps(&self, upstream: &[&InstanceId]) -> u64 {
        self.golden
            .sidecar
            .lifted()
            .iter()
            .filter(|l| upstream.contains(&&l.instance))
            .count() as u64
    }
}
