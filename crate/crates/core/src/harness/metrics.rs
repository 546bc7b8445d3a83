//! Frontier metrics per run and medians per table cell.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::case::{ControllerKind, Domain, Regime, Status};
use crate::controllers::RecoveryOutcome;
use crate::sidecar::InstanceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Frontier {
    pub replay: usize,
    pub upstream_replay: usize,
    pub preserved_instances: usize,
    /// Sum of synthetic per-action costs over the replay trace.
    pub failure_to_milestone: u64,
}

/// Instances completed before the failure, other than the failed one.
pub fn upstream_set(outcome: &RecoveryOutcome) -> BTreeSet<&InstanceId> {
    outcome
        .completed_before
        .iter()
        .filter(|i| Some(*i) != outcome.failed_instance.as_ref())
        .collect()
}

pub fn compute_metrics(outcome: &RecoveryOutcome) -> Frontier {
    let upstream = upstream_set(outcome);
    let trace = &outcome.replay_trace;
    let touched: BTreeSet<&InstanceId> = trace
        .iter()
        .map(|s| &s.instance)
        .filter(|i| upstream.contains(i))
        .collect();
    Frontier {
        replay: trace.len(),
        upstream_replay: trace.iter().filter(|s| upstream.contains(&s.instance)).count(),
        preserved_instances: upstream.len() - touched.len(),
        failure_to_milestone: trace.iter().map(|s| u64::from(s.cost)).sum(),
    }
}

/// Median over successful runs; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Renders a median cell; unsuccessful cells show `--`.
pub fn cell(value: Option<f64>) -> String {
    match value {
        None => "--".into(),
        Some(v) if v.fract() == 0.0 => format!("{v:.0}"),
        Some(v) => format!("{v:.1}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub domain: Option<Domain>,
    pub regime: Regime,
    pub controller: ControllerKind,
    pub runs: usize,
    pub success: f64,
    pub replay: Option<f64>,
    pub upstream_replay: Option<f64>,
    pub preserved_instances: Option<f64>,
    pub failure_to_milestone: Option<f64>,
    pub recovery_observed: f64,
    pub status: BTreeMap<Status, usize>,
}

/// One run's contribution to a metrics cell.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub status: Status,
    pub frontier: Frontier,
    pub recovery_observed: bool,
}

impl MetricsRow {
    pub fn aggregate(domain: Option<Domain>, regime: Regime, controller: ControllerKind, samples: &[Sample]) -> Self {
        let ok: Vec<&Sample> = samples.iter().filter(|s| s.status == Status::Ok).collect();
        let med = |f: fn(&Frontier) -> f64| median(&ok.iter().map(|s| f(&s.frontier)).collect::<Vec<_>>());
        let mut status = BTreeMap::new();
        for s in samples {
            *status.entry(s.status).or_insert(0) += 1;
        }
        let rate = |n: usize| {
            if samples.is_empty() {
                0.0
            } else {
                n as f64 / samples.len() as f64
            }
        };
        Self {
            domain,
            regime,
            controller,
            runs: samples.len(),
            success: rate(ok.len()),
            replay: med(|f| f.replay as f64),
            upstream_replay: med(|f| f.upstream_replay as f64),
            preserved_instances: med(|f| f.preserved_instances as f64),
            failure_to_milestone: med(|f| f.failure_to_milestone as f64),
            recovery_observed: rate(samples.iter().filter(|s| s.recovery_observed).count()),
            status,
        }
    }

    /// Most frequent status token; ties break toward the earlier token.
    pub fn dominant_status(&self) -> Option<Status> {
        self.status
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(s, _)| *s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[1.0, 4.0]), Some(2.5));
        assert_eq!(cell(None), "--");
        assert_eq!(cell(Some(26.0)), "26");
        assert_eq!(cell(Some(2.5)), "2.5");
    }

    #[test]
    fn unsuccessful_cells_render_empty() {
        let s = Sample {
            status: Status::NoRecov,
            frontier: Frontier::default(),
            recovery_observed: false,
        };
        let row = MetricsRow::aggregate(None, Regime::CommitSensitive, ControllerKind::CompEntryOnly, &[s, s]);
        assert_eq!(row.success, 0.0);
        assert_eq!(row.replay, None);
        assert_eq!(row.dominant_status(), Some(Status::NoRecov));
    }
}
