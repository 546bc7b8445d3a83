//! Deterministic JSON and markdown reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{Case, ControllerKind, Domain, Regime, WitnessCase};
use crate::controllers::RunError;
use crate::domains::{self, UniverseLock, WrongBoundary};

use super::ablation::{guard_off, wrong_boundary, BoundaryRow, GuardOffRow};
use super::calibration::{calibrate, summarize, CalibrationEvent, CalibrationRow};
use super::depth::{depth_benchmark, DepthReport};
use super::localization::{alignment, consequence_probes, weakened_keys, Alignment, Ambiguity, ProbeRow};
use super::metrics::{cell, MetricsRow, Sample};
use super::runner::{prepare, run_universe, RunConfig, RunRecord};

pub const REPORT_VERSION: u32 = 1;
/// Output directory override for written reports.
pub const REPORT_DIR_ENV: &str = "RECOVERY_REPORT_DIR";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denominators {
    pub cases: usize,
    pub repeat_rows: usize,
    pub runs: usize,
    pub comparable_rows: usize,
    pub evaluated_events: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticRow {
    pub rows: usize,
    pub comparable: usize,
    pub safe_equivalent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report: u32,
    pub seed: u64,
    pub repeat: u32,
    pub universe_hash: String,
    pub config_hashes: BTreeMap<Domain, String>,
    pub denominators: Denominators,
    pub panel_a: Vec<MetricsRow>,
    pub panel_b: Vec<MetricsRow>,
    pub semantic: BTreeMap<String, SemanticRow>,
    pub calibration: CalibrationRow,
    pub calibration_by_domain: BTreeMap<Domain, CalibrationRow>,
    pub calibration_events: Vec<CalibrationEvent>,
    pub alignment: Alignment,
    pub ambiguity: Ambiguity,
    pub probes: Vec<ProbeRow>,
    pub depth: Option<DepthReport>,
    pub guard_off: Vec<GuardOffRow>,
    pub wrong_boundary: Vec<BoundaryRow>,
    pub runs: Vec<RunRecord>,
}

/// What a report covers.
pub struct ReportInputs {
    pub cases: Vec<Case>,
    pub witnesses: Vec<WitnessCase>,
    pub wrong_boundaries: Vec<WrongBoundary>,
    pub probes: bool,
    /// 0 skips the depth benchmark.
    pub max_depth: usize,
}

impl ReportInputs {
    pub fn universe() -> Self {
        Self {
            cases: domains::universe(),
            witnesses: domains::witnesses(),
            wrong_boundaries: domains::wrong_boundaries(),
            probes: true,
            max_depth: 5,
        }
    }

    pub fn empty() -> Self {
        Self {
            cases: Vec::new(),
            witnesses: Vec::new(),
            wrong_boundaries: Vec::new(),
            probes: false,
            max_depth: 0,
        }
    }
}

pub fn metrics_rows(records: &[RunRecord], regime: Regime) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    let sample = |r: &RunRecord| Sample {
        status: r.status,
        frontier: r.frontier,
        recovery_observed: r.recovery_observed,
    };
    for domain in Domain::ALL.iter().map(|d| Some(*d)).chain([None]) {
        for controller in ControllerKind::ALL {
            let samples: Vec<Sample> = records
                .iter()
                .filter(|r| r.regime == regime && r.controller == *controller)
                .filter(|r| domain.is_none_or(|d| r.domain == d))
                .map(sample)
                .collect();
            if !samples.is_empty() {
                rows.push(MetricsRow::aggregate(domain, regime, *controller, &samples));
            }
        }
    }
    rows
}

/// CompFrozen rows at repeat 0, one per case.
pub fn semantic_summary(records: &[RunRecord]) -> BTreeMap<String, SemanticRow> {
    let mut out: BTreeMap<String, SemanticRow> = BTreeMap::new();
    let rows = records
        .iter()
        .filter(|r| r.controller == ControllerKind::CompFrozen && r.repeat == 0);
    for r in rows {
        for key in [r.domain.to_string(), "overall".to_string()] {
            let row = out.entry(key).or_default();
            row.rows += 1;
            row.comparable += usize::from(r.audit.comparable);
            row.safe_equivalent += usize::from(r.audit.comparable && r.audit.safe_equivalent);
        }
    }
    out
}

pub fn build_report(inputs: ReportInputs, cfg: &RunConfig) -> Result<Report, ReportError> {
    let mode = cfg.mode;
    let case_refs: Vec<Case> = inputs.cases.clone();
    let prepared = prepare(inputs.cases, mode)?;
    let runs = run_universe(&prepared, ControllerKind::ALL, cfg)?;

    let mut calibration_cases: Vec<Case> = case_refs.clone();
    calibration_cases.extend(inputs.witnesses.iter().map(|w| w.case.clone()));
    let calibration_prepared = prepare(calibration_cases, mode)?;
    let events = calibrate(&calibration_prepared, cfg)?;
    let (calibration, calibration_by_domain) = summarize(&events);

    let refs: Vec<&Case> = case_refs.iter().collect();
    let guard = inputs
        .witnesses
        .iter()
        .map(|w| guard_off(w, mode))
        .collect::<Result<Vec<_>, _>>()?;
    let mut boundary = Vec::new();
    for wb in &inputs.wrong_boundaries {
        boundary.extend(wrong_boundary(wb, mode)?);
    }
    let semantic = semantic_summary(&runs);
    let lock = UniverseLock::current();
    let config_hashes = Domain::ALL
        .iter()
        .map(|d| (*d, domains::model(*d).configs().hash().to_string()))
        .collect();
    Ok(Report {
        report: REPORT_VERSION,
        seed: cfg.seed,
        repeat: cfg.repeat,
        universe_hash: lock.hash,
        config_hashes,
        denominators: Denominators {
            cases: case_refs.len(),
            repeat_rows: case_refs.len() * cfg.repeat as usize,
            runs: runs.len(),
            comparable_rows: semantic.get("overall").map_or(0, |r| r.comparable),
            evaluated_events: events.len(),
        },
        panel_a: metrics_rows(&runs, Regime::CommitSensitive),
        panel_b: metrics_rows(&runs, Regime::Official),
        semantic,
        calibration,
        calibration_by_domain,
        calibration_events: events,
        alignment: alignment(&runs, &refs),
        ambiguity: weakened_keys(&prepared, mode)?,
        probes: if inputs.probes {
            consequence_probes(mode)?
        } else {
            Vec::new()
        },
        depth: (inputs.max_depth > 0)
            .then(|| depth_benchmark(inputs.max_depth))
            .transpose()?,
        guard_off: guard,
        wrong_boundary: boundary,
        runs,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Recovery report\n");
        let _ = writeln!(md, "- report: {}", self.report);
        let _ = writeln!(md, "- seed: {}, repeat: {}", self.seed, self.repeat);
        let _ = writeln!(md, "- universe: `{}`", self.universe_hash);
        let d = &self.denominators;
        let _ = writeln!(
            md,
            "- denominators: {} cases, {} repeat rows, {} runs, {} comparable rows, {} calibration events\n",
            d.cases, d.repeat_rows, d.runs, d.comparable_rows, d.evaluated_events
        );
        for (title, rows) in [
            ("Panel A: commit-sensitive", &self.panel_a),
            ("Panel B: official", &self.panel_b),
        ] {
            let _ = writeln!(md, "## {title}\n");
            md.push_str(&metrics_table(rows));
            md.push('\n');
        }
        let _ = writeln!(md, "## Semantic audit\n");
        md.push_str(&semantic_table(&self.semantic));
        let _ = writeln!(md, "\n## Blocking calibration\n");
        md.push_str(&calibration_table(&self.calibration, &self.calibration_by_domain));
        let a = &self.alignment;
        let w = &self.ambiguity;
        let _ = writeln!(md, "\n## Localization\n");
        let _ = writeln!(md, "- full-key exact: {}/{} rows", a.full_key_exact, a.rows);
        let _ = writeln!(
            md,
            "- recovery-scope match: {}/{}; checkpoint type: {}/{}",
            a.scope_match, a.rows, a.checkpoint_match, a.rows
        );
        let _ = writeln!(
            md,
            "- weakened keys over {} candidates: drop-ordinal ambiguous {}, drop-entity ambiguous {}, aliases {}",
            w.candidates, w.drop_ordinal_ambiguous, w.drop_entity_ambiguous, w.reentry_aliases
        );
        for r in &w.reentry {
            let _ = writeln!(
                md,
                "- re-entry `{}`: {} candidates, abstained: {}",
                r.case, r.drop_ordinal_candidates, r.abstained
            );
        }
        for p in &self.probes {
            let _ = writeln!(
                md,
                "- probe {} `{}`: abstained {}, stale erases {}; {}",
                p.domain, p.case, p.abstained, p.stale_erases_refined, p.detail
            );
        }
        if let Some(dr) = &self.depth {
            let _ = writeln!(md, "\n## Snapshot depth\n");
            let _ = writeln!(
                md,
                "| Depth | Mode | Peak payload bytes | Restore cost |\n|---|---|---|---|"
            );
            for p in &dr.points {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} |",
                    p.depth,
                    p.mode.as_str(),
                    p.peak_payload_bytes,
                    p.restore_cost
                );
            }
            let _ = writeln!(
                md,
                "\nregistry growth {:.2}x, inline growth {:.2}x, inline/registry payload {:.2}x, registry/inline restore {:.2}x",
                dr.registry_growth, dr.inline_growth, dr.inline_registry_payload_ratio, dr.registry_inline_restore_ratio
            );
        }
        let _ = writeln!(md, "\n## Ablations\n");
        let _ = writeln!(md, "| Case | Guard on | Dropped | Guard-off safe |\n|---|---|---|---|");
        for g in &self.guard_off {
            let reason = g.guard_on_reason.map_or("-", |r| r.as_str());
            let _ = writeln!(
                md,
                "| {} | {} ({reason}) | {} | {} |",
                g.case,
                g.guard_on_status,
                g.dropped.len(),
                g.guard_off_safe_equivalent
            );
        }
        let _ = writeln!(
            md,
            "\n| Domain | Edge | Reviewed | Closed | Certified | Restore safe |\n|---|---|---|---|---|---|"
        );
        for b in &self.wrong_boundary {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                b.domain, b.edge, b.reviewed, b.closed, b.certified, b.restore_safe
            );
        }
        md
    }

    /// Write `report.json` and `report.md` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), ReportError> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join("report.json");
        let md = dir.join("report.md");
        std::fs::write(&json, self.to_json())?;
        std::fs::write(&md, self.to_markdown())?;
        Ok((json, md))
    }
}

pub fn semantic_table(rows: &BTreeMap<String, SemanticRow>) -> String {
    let mut md = String::from("| Domain | Rows | Comparable | Safe-equivalent |\n|---|---|---|---|\n");
    let ordered = rows
        .iter()
        .filter(|(k, _)| k.as_str() != "overall")
        .chain(rows.get_key_value("overall"));
    for (k, r) in ordered {
        let _ = writeln!(md, "| {k} | {} | {} | {} |", r.rows, r.comparable, r.safe_equivalent);
    }
    md
}

pub fn calibration_table(overall: &CalibrationRow, by_domain: &BTreeMap<Domain, CalibrationRow>) -> String {
    let mut md = String::new();
    let _ = writeln!(
        md,
        "| Domain | Events | Admitted | Blocked | Dependency | Effect | False-blocked | Unsafe admissions |\n|---|---|---|---|---|---|---|---|"
    );
    let rows = by_domain
        .iter()
        .map(|(d, r)| (d.to_string(), r))
        .chain([("overall".to_string(), overall)]);
    for (k, r) in rows {
        let _ = writeln!(
            md,
            "| {k} | {} | {} | {} | {} | {} | {} | {} |",
            r.evaluated_events,
            r.admitted,
            r.blocked,
            r.dependency_blocked,
            r.effect_blocked,
            r.false_blocked,
            r.unsafe_admissions
        );
    }
    md
}

pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut md = String::from(
        "| Domain | Method | Success | Replay | Up. replay | Preserved inst. | F->M (units) | Recov. obs. | Status |\n|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let domain = r.domain.map_or("all".to_string(), |d| d.to_string());
        let status = r.dominant_status().map_or("-", |s| s.as_str());
        let _ = writeln!(
            md,
            "| {domain} | {} | {:.2} | {} | {} | {} | {} | {:.2} | {status} |",
            r.controller,
            r.success,
            cell(r.replay),
            cell(r.upstream_replay),
            cell(r.preserved_instances),
            cell(r.failure_to_milestone),
            r.recovery_observed
        );
    }
    md
}

/// Output directory from the environment, falling back to `default`.
pub fn report_dir(default: &Path) -> PathBuf {
    std::env::var_os(REPORT_DIR_ENV).map_or_else(|| default.to_path_buf(), PathBuf::from)
}
