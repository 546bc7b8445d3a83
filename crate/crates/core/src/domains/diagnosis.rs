//! Diagnosis domain: investigate faults, apply one repair, publish a report.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::case::{Case, Domain, Regime, Status, WitnessCase};
use crate::contracts::{ConfigSet, EffectClass, Predicate};
use crate::sidecar::{InstanceId, Lifecycle};

use super::builder::{set, CaseDraft, Model, Script, SkeletonSpec};

pub const MAX_FAULTS: usize = 3;
const HYPOTHESES: [&str; 3] = ["disk pressure", "stale dns cache", "expired certificate"];

pub fn fault(k: usize) -> String {
    format!("fault[{k}]")
}

pub fn model() -> Model {
    let mut m = Model::new("INTAKE");
    m.states(&[
        "INTAKE",
        "FINDINGS_READY",
        "REPAIR_READY",
        "DONE",
        "COLLECTING",
        "ANALYZING",
        "HYPOTHESIS_REVIEW",
        "REPAIR_PLANNING",
        "REPAIRING",
        "REPAIR_VERIFY",
        "REPORTING",
        "REPORT_REVIEW",
        "PUBLISHING",
    ]);
    m.edge("INTAKE", "open_finding", "COLLECTING")
        .edge("FINDINGS_READY", "open_finding", "COLLECTING")
        .edge("COLLECTING", "collect", "ANALYZING")
        .edge("ANALYZING", "analyze", "HYPOTHESIS_REVIEW")
        .edge("HYPOTHESIS_REVIEW", "accept", "HYPOTHESIS_REVIEW")
        .edge("HYPOTHESIS_REVIEW", "rule_out", "HYPOTHESIS_REVIEW")
        .edge("HYPOTHESIS_REVIEW", "close_finding", "FINDINGS_READY")
        .edge("HYPOTHESIS_REVIEW", "findings_done", "REPAIR_READY")
        .edge("HYPOTHESIS_REVIEW", "dismiss", "DONE")
        .edge("HYPOTHESIS_REVIEW", "investigate_next", "COLLECTING")
        .edge("FINDINGS_READY", "reopen_finding", "HYPOTHESIS_REVIEW")
        .edge("REPAIR_READY", "begin_repair", "REPAIR_PLANNING")
        .edge("REPAIR_PLANNING", "plan_repair", "REPAIRING")
        .edge("REPAIRING", "apply_repair", "REPAIR_VERIFY")
        .edge("REPAIR_VERIFY", "record_repair", "REPAIR_VERIFY")
        .edge("REPAIR_VERIFY", "note_repair", "REPAIR_VERIFY")
        .edge("REPAIR_VERIFY", "close_repair", "REPAIR_READY")
        .edge("REPAIR_VERIFY", "finish_repair", "DONE")
        .edge("REPAIR_READY", "start_report", "REPORTING")
        .edge("REPORTING", "summarize", "REPORT_REVIEW")
        .edge("REPORT_REVIEW", "approve_report", "REPORT_REVIEW")
        .edge("REPORT_REVIEW", "publish", "PUBLISHING")
        .edge("PUBLISHING", "close_report", "DONE");
    m.keys([
        "symptoms",
        "repair_plan",
        "repair_applied",
        "repair_log",
        "repair_note",
        "summary",
        "report_approved",
        "published",
    ]);
    for k in 0..MAX_FAULTS {
        m.entity(&fault(k), &["evidence", "hypothesis", "accepted", "ruled_out"]);
    }
    m.entity("repair", &[]).entity("report", &[]);
    m.effect("repair", EffectClass::Irreversible, None);

    let review = || Predicate::state("HYPOTHESIS_REVIEW");
    m.predicate(
        "finding_accepted",
        Predicate::all(vec![
            review(),
            Predicate::present(["{entity}.hypothesis"]),
            Predicate::equal("{entity}.accepted", true),
        ]),
    )
    .predicate(
        "finding_ruled_out",
        Predicate::all(vec![
            review(),
            Predicate::present(["{entity}.evidence"]),
            Predicate::equal("{entity}.ruled_out", true),
        ]),
    )
    .predicate("finding_handoff", Predicate::present(["{entity}.hypothesis"]))
    .predicate(
        "repair_recorded",
        Predicate::all(vec![
            Predicate::state("REPAIR_VERIFY"),
            Predicate::present(["repair_log"]),
        ]),
    )
    .predicate("repair_handoff", Predicate::present(["repair_log"]))
    .predicate(
        "report_approved",
        Predicate::all(vec![
            Predicate::state("REPORT_REVIEW"),
            Predicate::equal("report_approved", true),
        ]),
    )
    .predicate("report_handoff", Predicate::present(["published"]));

    let hyps: Vec<String> = (0..MAX_FAULTS).map(|k| format!("{}.hypothesis", fault(k))).collect();
    let hyp_inputs: Vec<&str> = hyps.iter().map(String::as_str).collect();
    m.skeleton(
        SkeletonSpec {
            id: "Diagnose",
            internal: &["COLLECTING", "ANALYZING", "HYPOTHESIS_REVIEW"],
            entry: &["COLLECTING", "HYPOTHESIS_REVIEW"],
            commit: &["finding_accepted", "finding_ruled_out"],
            exits: &[
                ("HYPOTHESIS_REVIEW", "FINDINGS_READY", "finding_handoff"),
                ("HYPOTHESIS_REVIEW", "REPAIR_READY", "finding_handoff"),
                ("HYPOTHESIS_REVIEW", "DONE", "finding_handoff"),
            ],
            pending: &[],
            inputs: &["symptoms", "fault[0].hypothesis"],
            outputs: &[
                "{entity}.evidence",
                "{entity}.hypothesis",
                "{entity}.accepted",
                "{entity}.ruled_out",
            ],
            effects: &[],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "Repair",
            internal: &["REPAIR_PLANNING", "REPAIRING", "REPAIR_VERIFY"],
            entry: &["REPAIR_PLANNING"],
            commit: &["repair_recorded"],
            exits: &[
                ("REPAIR_VERIFY", "REPAIR_READY", "repair_handoff"),
                ("REPAIR_VERIFY", "DONE", "repair_handoff"),
            ],
            pending: &[],
            inputs: &hyp_inputs,
            outputs: &["repair_plan", "repair_applied", "repair_log", "repair_note"],
            effects: &["repair"],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "Report",
            internal: &["REPORTING", "REPORT_REVIEW", "PUBLISHING"],
            entry: &["REPORTING"],
            commit: &["report_approved"],
            exits: &[("PUBLISHING", "DONE", "report_handoff")],
            pending: &[],
            inputs: &["repair_log"],
            outputs: &["summary", "report_approved", "published"],
            effects: &[],
        }
        .build(),
    );
    m
}

pub fn configs() -> Arc<ConfigSet> {
    model().configs()
}

const DIAGNOSE: &str = "Diagnose";
const REPAIR: &str = "Repair";

fn hyp_key(k: usize) -> String {
    format!("{}.hypothesis", fault(k))
}

/// open, collect, analyze. Leaves the finding in HYPOTHESIS_REVIEW uncommitted.
fn investigate(s: &mut Script, k: usize, open: &str) {
    let e = fault(k);
    let st = s.step(open, &e);
    if k == 0 {
        st.set("symptoms", "p99 latency spike on checkout");
    } else {
        st.read(&["fault[0].hypothesis"]);
    }
    s.step("collect", &e)
        .set(&format!("{e}.evidence"), format!("trace bundle {k}"))
        .read(&["symptoms"])
        .cost(2);
    s.step("analyze", &e)
        .set(&hyp_key(k), HYPOTHESES[k % HYPOTHESES.len()])
        .read(&[&format!("{e}.evidence")]);
}

fn accept(s: &mut Script, k: usize) {
    let e = fault(k);
    s.step("accept", &e)
        .set(&format!("{e}.accepted"), true)
        .read(&[&hyp_key(k)]);
}

fn rule_out(s: &mut Script, k: usize) {
    let e = fault(k);
    s.step("rule_out", &e)
        .set(&format!("{e}.ruled_out"), true)
        .read(&[&format!("{e}.evidence")]);
}

fn sequential(s: &mut Script, n: usize) {
    for k in 0..n {
        investigate(s, k, "open_finding");
        accept(s, k);
        let close = if k + 1 == n { "findings_done" } else { "close_finding" };
        s.step(close, &fault(k));
    }
}

/// begin, plan, apply, record, note. Leaves Repair committed in REPAIR_VERIFY.
fn repair(s: &mut Script, n: usize) {
    let keys: Vec<String> = (0..n).map(hyp_key).collect();
    let reads: Vec<&str> = keys.iter().map(String::as_str).collect();
    s.step("begin_repair", "repair").read(&reads);
    s.step("plan_repair", "repair")
        .set("repair_plan", format!("{n} remediations"))
        .read(&reads);
    s.step("apply_repair", "repair")
        .set("repair_applied", true)
        .read(&["repair_plan"])
        .emit("repair", format!("apply plan for {n} findings"))
        .cost(4);
    s.step("record_repair", "repair")
        .set("repair_log", "REM-311")
        .read(&["repair_plan"]);
    s.step("note_repair", "repair")
        .set("repair_note", "verified in canary")
        .read(&["repair_log"]);
}

fn report(s: &mut Script) {
    s.step("close_repair", "repair");
    s.step("start_report", "report").read(&["repair_log"]);
    s.step("summarize", "report")
        .set("summary", "root cause found and repaired")
        .read(&["repair_log"]);
    s.step("approve_report", "report")
        .set("report_approved", true)
        .read(&["summary"]);
    s.step("publish", "report")
        .set("published", "INC-2291")
        .read(&["summary"]);
    s.step("close_report", "report");
}

fn golden(n: usize) -> BTreeSet<String> {
    let mut keys = set((0..n).map(hyp_key));
    keys.extend(["repair_log".to_string(), "published".to_string()]);
    keys
}

struct Ctx {
    model: Model,
    configs: Arc<ConfigSet>,
}

impl Ctx {
    fn new() -> Self {
        let model = model();
        let configs = model.configs();
        Self { model, configs }
    }

    #[allow(clippy::too_many_arguments)]
    fn case(
        &self,
        id: &str,
        regime: Regime,
        script: Script,
        fail_at: u64,
        extra: Vec<u64>,
        anchor: &str,
        flavor: Option<Status>,
        golden_keys: BTreeSet<String>,
        expected: (InstanceId, Option<Lifecycle>),
    ) -> Case {
        CaseDraft {
            model: &self.model,
            configs: &self.configs,
            domain: Domain::Diagnosis,
            id: id.into(),
            regime,
            script,
            fail_at,
            extra,
            coarse_anchor: anchor,
            entry_flavor: flavor,
            goal: Predicate::present(["repair_log", "published"]),
            golden_keys,
            expected,
        }
        .build()
    }
}

fn official_case(ctx: &Ctx, id: &str, n: usize, fail: (&str, &str), extra: (&str, &str)) -> Case {
    let mut s = Script::new();
    sequential(&mut s, n);
    repair(&mut s, n);
    report(&mut s);
    let (skeleton, anchor) = match fail.1 {
        "repair" => (REPAIR, "REPAIR_READY"),
        "report" => ("Report", "REPAIR_READY"),
        _ => (DIAGNOSE, "FINDINGS_READY"),
    };
    let at = s.find_last(fail.0, fail.1);
    let extra = vec![s.find_last(extra.0, extra.1)];
    ctx.case(
        id,
        Regime::Official,
        s,
        at,
        extra,
        anchor,
        None,
        golden(n),
        (InstanceId::new(skeleton, fail.1, 0), Some(Lifecycle::Entry)),
    )
}

pub fn official() -> Vec<Case> {
    let ctx = Ctx::new();
    vec![
        official_case(
            &ctx,
            "diagnosis-off-01",
            2,
            ("analyze", "fault[1]"),
            ("collect", "fault[0]"),
        ),
        official_case(
            &ctx,
            "diagnosis-off-02",
            2,
            ("plan_repair", "repair"),
            ("analyze", "fault[1]"),
        ),
        official_case(
            &ctx,
            "diagnosis-off-03",
            3,
            ("summarize", "report"),
            ("accept", "fault[2]"),
        ),
        official_case(
            &ctx,
            "diagnosis-off-04",
            1,
            ("approve_report", "report"),
            ("analyze", "fault[0]"),
        ),
    ]
}

/// The repair is applied and recorded; closing it fails afterwards.
fn after_repair(ctx: &Ctx, id: &str, n: usize) -> Case {
    let mut s = Script::new();
    sequential(&mut s, n);
    repair(&mut s, n);
    let extra = s.find_last("record_repair", "repair");
    report(&mut s);
    let fail = s.find_last("close_repair", "repair");
    ctx.case(
        id,
        Regime::CommitSensitive,
        s,
        fail,
        vec![extra],
        "REPAIR_READY",
        Some(Status::NoRecov),
        golden(n),
        (InstanceId::new(REPAIR, "repair", 0), Some(Lifecycle::Commit)),
    )
}

/// fault[0] stays in review while `consumers` later findings read it and commit.
fn parked(ctx: &Ctx, id: &str, consumers: usize, ruled_out: bool, fail_action: &str) -> Case {
    let mut s = Script::new();
    investigate(&mut s, 0, "open_finding");
    for k in 1..=consumers {
        investigate(&mut s, k, "investigate_next");
        accept(&mut s, k);
    }
    if ruled_out {
        rule_out(&mut s, 0);
    } else {
        accept(&mut s, 0);
    }
    let extra = s.len() - 1;
    let fail = s.len();
    s.step(fail_action, "fault[0]");
    if fail_action == "close_finding" {
        for k in 1..=consumers {
            s.step("reopen_finding", &fault(k));
            let close = if k == consumers {
                "findings_done"
            } else {
                "close_finding"
            };
            s.step(close, &fault(k));
        }
    }
    let n = consumers + 1;
    repair(&mut s, n);
    report(&mut s);
    ctx.case(
        id,
        Regime::CommitSensitive,
        s,
        fail,
        vec![extra],
        "INTAKE",
        Some(Status::Contract),
        golden(n),
        (InstanceId::new(DIAGNOSE, "fault[0]", 0), Some(Lifecycle::Commit)),
    )
}

pub fn commit_sensitive() -> Vec<Case> {
    let ctx = Ctx::new();
    vec![
        after_repair(&ctx, "diagnosis-cs-01", 1),
        after_repair(&ctx, "diagnosis-cs-02", 2),
        after_repair(&ctx, "diagnosis-cs-03", 3),
        parked(&ctx, "diagnosis-cs-04", 1, false, "close_finding"),
        parked(&ctx, "diagnosis-cs-05", 2, false, "close_finding"),
        parked(&ctx, "diagnosis-cs-06", 1, true, "findings_done"),
    ]
}

/// fault[1] reads fault[0], commits and exits; fault[0] is reopened and fails closing.
pub fn witness() -> WitnessCase {
    let ctx = Ctx::new();
    let mut s = Script::new();
    investigate(&mut s, 0, "open_finding");
    accept(&mut s, 0);
    investigate(&mut s, 1, "investigate_next");
    accept(&mut s, 1);
    s.step("close_finding", "fault[1]");
    s.step("reopen_finding", "fault[0]");
    let fail = s.len();
    s.step("close_finding", "fault[0]");
    let case = CaseDraft {
        model: &ctx.model,
        configs: &ctx.configs,
        domain: Domain::Diagnosis,
        id: "diagnosis-witness".into(),
        regime: Regime::CommitSensitive,
        script: s,
        fail_at: fail,
        extra: vec![],
        coarse_anchor: "INTAKE",
        entry_flavor: Some(Status::Contract),
        goal: Predicate::present(["fault[0].hypothesis", "fault[1].hypothesis"]),
        golden_keys: set([hyp_key(0), hyp_key(1)]),
        expected: (InstanceId::new(DIAGNOSE, "fault[0]", 0), None),
    }
    .build();
    WitnessCase {
        case,
        expected_dropped: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::check::{case_contract, witness_contract};

    #[test]
    fn structure_counts() {
        let c = configs();
        assert_eq!(c.len(), 3);
        assert_eq!(c.commit_predicate_count(), 4);
        assert_eq!(c.exit_predicate_count(), 6);
    }

    #[test]
    fn every_case_meets_its_contract() {
        let cases: Vec<Case> = official().into_iter().chain(commit_sensitive()).collect();
        assert_eq!(cases.len(), 10);
        cases.iter().for_each(case_contract);
        witness_contract(&witness());
    }
}
