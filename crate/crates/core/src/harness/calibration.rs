//! Blocking calibration: every admitted event is audited after recovery and
//! every blocked event is re-run with the restore forced.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case::{Case, ControllerKind, Domain};
use crate::controllers::{forced_restore, recover, run_to_failure, RunError};
use crate::gate::{select_rollback, BlockedReason};
use crate::scenario::FailureSite;

use super::audit::audit_outcome;
use super::runner::{Prepared, RunConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationEvent {
    pub domain: Domain,
    pub case: String,
    pub seq: u64,
    pub action: String,
    pub admitted: bool,
    pub reason: Option<BlockedReason>,
    /// Admitted: post-admission audit passed. Blocked: some forced restore passed.
    pub audit_safe: bool,
}

impl CalibrationEvent {
    pub fn unsafe_admission(&self) -> bool {
        self.admitted && !self.audit_safe
    }

    pub fn false_block(&self) -> bool {
        !self.admitted && self.audit_safe
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub evaluated_events: usize,
    pub admitted: usize,
    pub blocked: usize,
    pub dependency_blocked: usize,
    pub effect_blocked: usize,
    pub false_blocked: usize,
    pub unsafe_admissions: usize,
}

impl CalibrationRow {
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a CalibrationEvent>) -> Self {
        let mut row = Self::default();
        for e in events {
            row.evaluated_events += 1;
            if e.admitted {
                row.admitted += 1;
            } else {
                row.blocked += 1;
                match e.reason.map(BlockedReason::family) {
                    Some("dependency") => row.dependency_blocked += 1,
                    Some("effect") => row.effect_blocked += 1,
                    _ => {}
                }
            }
            row.false_blocked += usize::from(e.false_block());
            row.unsafe_admissions += usize::from(e.unsafe_admission());
        }
        row
    }
}

/// Evaluate one failure site of `p`.
pub fn evaluate_event(p: &Prepared, site: &FailureSite, cfg: &RunConfig) -> Result<CalibrationEvent, RunError> {
    let case = &p.case;
    let failed = run_to_failure(case, site, cfg.mode)?;
    let decision = select_rollback(&failed.failure, &failed.entity, &failed.runtime.sidecar, cfg.options);
    let admitted = decision.eligible().is_some();
    let audit_safe = if admitted {
        let outcome = recover(ControllerKind::CompFrozen, case, &failed, cfg.options)?;
        audit_outcome(case, &outcome, site.seq, &p.golden).safe_equivalent
    } else {
        let mut any = false;
        for v in &decision.evaluated {
            let outcome = forced_restore(case, &failed, &v.checkpoint)?;
            any |= audit_outcome(case, &outcome, site.seq, &p.golden).safe_equivalent;
        }
        any
    };
    Ok(CalibrationEvent {
        domain: case.domain,
        case: case.id.clone(),
        seq: site.seq,
        action: site.action.clone(),
        admitted,
        reason: decision.blocked_reason(),
        audit_safe,
    })
}

fn sites(case: &Case) -> Vec<FailureSite> {
    std::iter::once(case.site.clone())
        .chain(case.extra_sites.iter().cloned())
        .collect()
}

/// Primary and extra sites of every prepared case, in order.
pub fn calibrate(prepared: &[Prepared], cfg: &RunConfig) -> Result<Vec<CalibrationEvent>, RunError> {
    let jobs: Vec<(usize, FailureSite)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(i, p)| sites(&p.case).into_iter().map(move |s| (i, s)))
        .collect();
    jobs.into_par_iter()
        .map(|(i, s)| evaluate_event(&prepared[i], &s, cfg))
        .collect()
}

/// Overall row plus one row per domain.
pub fn summarize(events: &[CalibrationEvent]) -> (CalibrationRow, BTreeMap<Domain, CalibrationRow>) {
    let mut per = BTreeMap::new();
    for d in Domain::ALL {
        let row = CalibrationRow::from_events(events.iter().filter(|e| e.domain == *d));
        if row.evaluated_events > 0 {
            per.insert(*d, row);
        }
    }
    (CalibrationRow::from_events(events), per)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;
    use crate::harness::runner::prepare;
    use crate::sidecar::SnapshotMode;

    #[test]
    fn universe_calibration_is_safe_with_both_families() {
        let mut cases = domains::universe();
        cases.extend(domains::witnesses().into_iter().map(|w| w.case));
        let prepared = prepare(cases, SnapshotMode::RegistryOnly).unwrap();
        let events = calibrate(&prepared, &RunConfig::default()).unwrap();
        let (row, _) = summarize(&events);
        assert_eq!(row.admitted + row.blocked, row.evaluated_events);
        assert_eq!(
            row.unsafe_admissions,
            0,
            "{:#?}",
            events.iter().filter(|e| e.unsafe_admission()).collect::<Vec<_>>()
        );
        assert_eq!(
            row.false_blocked,
            0,
            "{:#?}",
            events.iter().filter(|e| e.false_block()).collect::<Vec<_>>()
        );
        assert!(row.dependency_blocked > 0 && row.effect_blocked > 0);
    }
}
