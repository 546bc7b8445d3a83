//! Snapshot-depth benchmark over nested schedule slots.

use serde::{Deserialize, Serialize};

use crate::case::ControllerKind;
use crate::controllers::{golden_run, recover, run_to_failure, RunError};
use crate::domains::schedule;
use crate::gate::GateOptions;
use crate::sidecar::SnapshotMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthPoint {
    pub depth: usize,
    pub mode: SnapshotMode,
    pub peak_payload_bytes: usize,
    /// Key writes performed by the restore: inverted changes in registry
    /// mode, copied entries in inline mode.
    pub restore_cost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub max_depth: usize,
    pub points: Vec<DepthPoint>,
    pub registry_growth: f64,
    pub inline_growth: f64,
    pub inline_registry_payload_ratio: f64,
    pub registry_inline_restore_ratio: f64,
}

pub fn measure(depth: usize, mode: SnapshotMode) -> Result<DepthPoint, RunError> {
    let case = schedule::depth_case(depth);
    let golden = golden_run(&case, mode)?;
    let failed = run_to_failure(&case, &case.site, mode)?;
    let outcome = recover(ControllerKind::CompFrozen, &case, &failed, GateOptions::default())?;
    Ok(DepthPoint {
        depth,
        mode,
        peak_payload_bytes: golden.sidecar.peak_payload_bytes(),
        restore_cost: outcome.restore_cost,
    })
}

fn ratio(a: usize, b: usize) -> f64 {
    let r = a as f64 / b.max(1) as f64;
    (r * 100.0).round() / 100.0
}

pub fn depth_benchmark(max_depth: usize) -> Result<DepthReport, RunError> {
    let max_depth = max_depth.clamp(1, schedule::MAX_SLOTS);
    let mut points = Vec::new();
    for mode in SnapshotMode::ALL {
        for d in 1..=max_depth {
            points.push(measure(d, mode)?);
        }
    }
    let at = |mode: SnapshotMode, d: usize| {
        points
            .iter()
            .find(|p| p.mode == mode && p.depth == d)
            .expect("measured")
    };
    let peak_cost = |mode: SnapshotMode| {
        points
            .iter()
            .filter(|p| p.mode == mode)
            .map(|p| p.restore_cost)
            .max()
            .unwrap_or(0)
    };
    let reg = SnapshotMode::RegistryOnly;
    let inl = SnapshotMode::Inline;
    Ok(DepthReport {
        max_depth,
        registry_growth: ratio(at(reg, max_depth).peak_payload_bytes, at(reg, 1).peak_payload_bytes),
        inline_growth: ratio(at(inl, max_depth).peak_payload_bytes, at(inl, 1).peak_payload_bytes),
        inline_registry_payload_ratio: ratio(
            at(inl, max_depth).peak_payload_bytes,
            at(reg, max_depth).peak_payload_bytes,
        ),
        registry_inline_restore_ratio: ratio(peak_cost(reg), peak_cost(inl)),
        points,
    })
}
