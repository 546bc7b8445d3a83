//! Schedule-form domain: resolve meeting slots, finalize and submit the
//! form, then notify participants.

use std::sync::Arc;

use crate::case::{Case, Domain, Regime, Status, WitnessCase};
use crate::contracts::{ConfigSet, EffectClass, Predicate};
use crate::sidecar::{InstanceId, Lifecycle};

use super::builder::{set, CaseDraft, Model, Script, SkeletonSpec};

pub const MAX_SLOTS: usize = 5;
const DAYS: [&str; 6] = [
    "Monday 09:00",
    "Tuesday 14:00",
    "Wednesday 11:00",
    "Thursday 10:00",
    "Friday 15:00",
    "Monday 16:00",
];

pub fn slot(k: usize) -> String {
    format!("slot[{k}]")
}

pub fn model() -> Model {
    let mut m = Model::new("INTAKE");
    m.states(&[
        "INTAKE",
        "SLOT_READY",
        "REVIEW_READY",
        "DONE",
        "WAITING_SLOT_SELECTION",
        "SLOT_CONFIRMING",
        "WAITING_SLOT_REFINEMENT",
        "FINALIZING",
        "CONFIRMED",
        "SUBMITTED",
        "RENDERING",
        "NOTIFYING",
    ]);
    m.edge("INTAKE", "open_slot", "WAITING_SLOT_SELECTION")
        .edge("SLOT_READY", "open_slot", "WAITING_SLOT_SELECTION")
        .edge("WAITING_SLOT_SELECTION", "select_slot", "SLOT_CONFIRMING")
        .edge("SLOT_CONFIRMING", "confirm_slot", "WAITING_SLOT_REFINEMENT")
        .edge("WAITING_SLOT_REFINEMENT", "refine_slot", "WAITING_SLOT_REFINEMENT")
        .edge("WAITING_SLOT_REFINEMENT", "close_slot", "SLOT_READY")
        .edge("WAITING_SLOT_REFINEMENT", "finish_slots", "REVIEW_READY")
        .edge("WAITING_SLOT_REFINEMENT", "skip_review", "DONE")
        .edge("WAITING_SLOT_REFINEMENT", "open_next_slot", "WAITING_SLOT_SELECTION")
        .edge("WAITING_SLOT_SELECTION", "skip_selection", "SLOT_READY")
        .edge("SLOT_READY", "reopen_slot", "WAITING_SLOT_REFINEMENT")
        .edge("REVIEW_READY", "begin_finalize", "FINALIZING")
        .edge("FINALIZING", "finalize_schedule", "CONFIRMED")
        .edge("CONFIRMED", "preview_schedule", "CONFIRMED")
        .edge("CONFIRMED", "resume_slot", "WAITING_SLOT_REFINEMENT")
        .edge("CONFIRMED", "submit_form", "SUBMITTED")
        .edge("SUBMITTED", "prepare_render", "RENDERING")
        .edge("RENDERING", "render_final", "RENDERING")
        .edge("RENDERING", "complete", "DONE")
        .edge("RENDERING", "notify", "NOTIFYING")
        .edge("NOTIFYING", "draft_notice", "NOTIFYING")
        .edge("NOTIFYING", "send_notice", "NOTIFYING")
        .edge("NOTIFYING", "close_notice", "DONE");
    m.keys([
        "constraints",
        "schedule",
        "receipt",
        "preview",
        "render_job",
        "rendered",
        "notice_draft",
        "notified",
    ]);
    for k in 0..MAX_SLOTS {
        m.entity(&slot(k), &["candidates", "value", "pending_refine"]);
    }
    m.entity("final", &[]).entity("notify", &[]);
    m.effect("submit", EffectClass::Irreversible, None);

    m.predicate(
        "slot_confirmed",
        Predicate::all(vec![
            Predicate::state("WAITING_SLOT_REFINEMENT"),
            Predicate::present(["{entity}.value"]),
            Predicate::equal("{entity}.pending_refine", false),
        ]),
    )
    .predicate(
        "slot_handoff",
        Predicate::all(vec![
            Predicate::present(["{entity}.value"]),
            Predicate::equal("{entity}.pending_refine", false),
        ]),
    )
    .predicate(
        "render_ready",
        Predicate::all(vec![
            Predicate::state("RENDERING"),
            Predicate::present(["schedule", "receipt"]),
        ]),
    )
    .predicate(
        "preview_ready",
        Predicate::all(vec![
            Predicate::state("CONFIRMED"),
            Predicate::present(["schedule", "preview"]),
        ]),
    )
    .predicate("final_handoff", Predicate::present(["schedule", "rendered"]))
    .predicate(
        "notified",
        Predicate::all(vec![Predicate::state("NOTIFYING"), Predicate::present(["notified"])]),
    )
    .predicate("notify_handoff", Predicate::present(["notified"]));

    let slot_values: Vec<String> = (0..MAX_SLOTS).map(|k| format!("{}.value", slot(k))).collect();
    let slot_inputs: Vec<&str> = slot_values.iter().map(String::as_str).collect();
    m.skeleton(
        SkeletonSpec {
            id: "ResolveSlot",
            internal: &["WAITING_SLOT_SELECTION", "SLOT_CONFIRMING", "WAITING_SLOT_REFINEMENT"],
            entry: &["WAITING_SLOT_SELECTION", "WAITING_SLOT_REFINEMENT"],
            commit: &["slot_confirmed"],
            exits: &[
                ("WAITING_SLOT_REFINEMENT", "SLOT_READY", "slot_handoff"),
                ("WAITING_SLOT_REFINEMENT", "REVIEW_READY", "slot_handoff"),
                ("WAITING_SLOT_REFINEMENT", "DONE", "slot_handoff"),
            ],
            pending: &[],
            inputs: &["constraints", "slot[0].value"],
            outputs: &["{entity}.candidates", "{entity}.value", "{entity}.pending_refine"],
            effects: &[],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "FinalizeSchedule",
            internal: &["FINALIZING", "CONFIRMED", "SUBMITTED", "RENDERING"],
            entry: &["FINALIZING"],
            commit: &["render_ready", "preview_ready"],
            exits: &[
                ("RENDERING", "DONE", "final_handoff"),
                ("RENDERING", "NOTIFYING", "final_handoff"),
            ],
            pending: &[],
            inputs: &slot_inputs,
            outputs: &["schedule", "receipt", "preview", "render_job", "rendered"],
            effects: &["submit"],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "NotifyParticipants",
            internal: &["NOTIFYING"],
            entry: &["NOTIFYING"],
            commit: &["notified"],
            exits: &[("NOTIFYING", "DONE", "notify_handoff")],
            pending: &[],
            inputs: &["schedule"],
            outputs: &["notice_draft", "notified"],
            effects: &[],
        }
        .build(),
    );
    m
}

pub fn configs() -> Arc<ConfigSet> {
    model().configs()
}

fn slot_value(k: usize) -> &'static str {
    if k == 0 {
        "Thursday 10:00"
    } else {
        DAYS[k % DAYS.len()]
    }
}

const REFINED: &str = "Friday 10:00";

fn candidates(k: usize) -> String {
    (0..4)
        .map(|i| DAYS[(k + i) % DAYS.len()])
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Value slot `k` holds once resolved.
fn final_value(k: usize, refined: bool) -> &'static str {
    if refined {
        REFINED
    } else {
        slot_value(k)
    }
}

/// open, select, confirm; optional refinement. Leaves the slot in WAITING_SLOT_REFINEMENT.
fn resolve(s: &mut Script, k: usize, open: &str, pending: bool, refine_now: bool) {
    let e = slot(k);
    let mut st = s
        .step(open, &e)
        .set(&format!("{e}.candidates"), candidates(k))
        .read(&["constraints"]);
    if k == 0 {
        st = st.set("constraints", "45 minutes, weekdays");
    } else {
        st = st.read(&["slot[0].value"]);
    }
    let _ = st;
    s.step("select_slot", &e)
        .set(&format!("{e}.value"), slot_value(k))
        .set(&format!("{e}.pending_refine"), pending);
    s.step("confirm_slot", &e).read(&[&format!("{e}.value")]);
    if refine_now {
        refine(s, k);
    }
}

fn refine(s: &mut Script, k: usize) {
    let e = slot(k);
    s.step("refine_slot", &e)
        .set(&format!("{e}.value"), REFINED)
        .set(&format!("{e}.pending_refine"), false);
}

/// Resolve `n` slots in sequence; slot[0] optionally refined. Ends in REVIEW_READY.
fn sequential_slots(s: &mut Script, n: usize, refine0: bool) {
    for k in 0..n {
        resolve(s, k, "open_slot", k == 0 && refine0, k == 0 && refine0);
        let close = if k + 1 == n { "finish_slots" } else { "close_slot" };
        s.step(close, &slot(k));
    }
}

fn schedule_text(values: &[&str]) -> String {
    values.join("; ")
}

fn slot_value_keys(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{}.value", slot(k))).collect()
}

/// begin, finalize, submit, prepare. Leaves the flow in RENDERING with the
/// finalize instance committed.
fn finalize(s: &mut Script, values: &[&str]) {
    let keys = slot_value_keys(values.len());
    let reads: Vec<&str> = keys.iter().map(String::as_str).collect();
    s.step("begin_finalize", "final").read(&reads);
    s.step("finalize_schedule", "final")
        .set("schedule", schedule_text(values))
        .read(&reads);
    s.step("submit_form", "final")
        .set("receipt", "RCPT-0042")
        .read(&["schedule"])
        .emit("submit", schedule_text(values))
        .cost(3);
    s.step("prepare_render", "final")
        .set("render_job", "pdf")
        .read(&["schedule", "receipt"]);
}

fn render(s: &mut Script) {
    s.step("render_final", "final")
        .set("rendered", "schedule.pdf")
        .read(&["schedule"])
        .cost(2);
}

enum Ending {
    None,
    Complete,
    Notify,
}

fn ending(s: &mut Script, ending: Ending) {
    match ending {
        Ending::None => {}
        Ending::Complete => {
            s.step("complete", "final");
        }
        Ending::Notify => {
            s.step("notify", "final");
            s.step("draft_notice", "notify")
                .set("notice_draft", "Meeting schedule attached")
                .read(&["schedule"]);
            s.step("send_notice", "notify")
                .set("notified", true)
                .read(&["notice_draft"]);
            s.step("close_notice", "notify");
        }
    }
}

fn goal() -> Predicate {
    Predicate::present(["schedule", "receipt"])
}

fn golden(n: usize, extra: &[&str]) -> std::collections::BTreeSet<String> {
    let mut keys = set(slot_value_keys(n));
    keys.extend(extra.iter().map(|s| s.to_string()));
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
        golden_keys: std::collections::BTreeSet<String>,
        expected: (InstanceId, Option<Lifecycle>),
    ) -> Case {
        CaseDraft {
            model: &self.model,
            configs: &self.configs,
            domain: Domain::ScheduleForm,
            id: id.into(),
            regime,
            script,
            fail_at,
            extra,
            coarse_anchor: anchor,
            entry_flavor: flavor,
            goal: goal(),
            golden_keys,
            expected,
        }
        .build()
    }
}

fn inst(skeleton: &str, entity: &str, ordinal: u32) -> InstanceId {
    InstanceId::new(skeleton, entity, ordinal)
}

fn values(n: usize, refine0: bool) -> Vec<&'static str> {
    (0..n).map(|k| final_value(k, k == 0 && refine0)).collect()
}

const RESOLVE: &str = "ResolveSlot";
const FINALIZE: &str = "FinalizeSchedule";

/// Sequential slots, then finalize and fail at `render_final`.
fn render_failure(ctx: &Ctx, id: &str, n: usize, end: Ending) -> Case {
    let mut s = Script::new();
    sequential_slots(&mut s, n, true);
    finalize(&mut s, &values(n, true));
    let extra = s.find_last("prepare_render", "final");
    render(&mut s);
    let fail = s.find_last("render_final", "final");
    ending(&mut s, end);
    ctx.case(
        id,
        Regime::CommitSensitive,
        s,
        fail,
        vec![extra],
        "REVIEW_READY",
        Some(Status::NoRecov),
        golden(n, &["schedule", "rendered"]),
        (inst(FINALIZE, "final", 0), Some(Lifecycle::Commit)),
    )
}

/// slot[0] stays parked while `consumers` later slots read it and commit.
fn parked_consumer(ctx: &Ctx, id: &str, consumers: usize, fail_action: &str, end: Ending) -> Case {
    let mut s = Script::new();
    resolve(&mut s, 0, "open_slot", true, false);
    for k in 1..=consumers {
        resolve(&mut s, k, "open_next_slot", false, false);
    }
    refine(&mut s, 0);
    let extra = s.find_last("refine_slot", "slot[0]");
    let fail = s.len();
    s.step(fail_action, "slot[0]");
    if fail_action == "close_slot" {
        for k in 1..=consumers {
            s.step("reopen_slot", &slot(k));
            let close = if k == consumers { "finish_slots" } else { "close_slot" };
            s.step(close, &slot(k));
        }
    }
    let n = consumers + 1;
    finalize(&mut s, &values(n, true));
    render(&mut s);
    ending(&mut s, end);
    ctx.case(
        id,
        Regime::CommitSensitive,
        s,
        fail,
        vec![extra],
        "INTAKE",
        Some(Status::Contract),
        golden(n, &["schedule", "rendered"]),
        (inst(RESOLVE, "slot[0]", 0), Some(Lifecycle::Commit)),
    )
}

pub fn commit_sensitive() -> Vec<Case> {
    let ctx = Ctx::new();
    vec![
        render_failure(&ctx, "schedule_form-cs-01", 5, Ending::None),
        render_failure(&ctx, "schedule_form-cs-02", 2, Ending::Complete),
        render_failure(&ctx, "schedule_form-cs-03", 3, Ending::Notify),
        render_failure(&ctx, "schedule_form-cs-04", 4, Ending::Complete),
        parked_consumer(&ctx, "schedule_form-cs-05", 1, "close_slot", Ending::Complete),
        parked_consumer(&ctx, "schedule_form-cs-06", 2, "close_slot", Ending::Notify),
        parked_consumer(&ctx, "schedule_form-cs-07", 1, "finish_slots", Ending::Complete),
    ]
}

/// Sequential run failing inside a slot or before finalize commits.
fn official_case(ctx: &Ctx, id: &str, n: usize, fail: (&str, &str), extra: (&str, &str), end: Ending) -> Case {
    let mut s = Script::new();
    sequential_slots(&mut s, n, false);
    finalize(&mut s, &values(n, false));
    render(&mut s);
    ending(&mut s, end);
    let at = s.find_last(fail.0, fail.1);
    let skeleton = if fail.1 == "final" { FINALIZE } else { RESOLVE };
    ctx.case(
        id,
        Regime::Official,
        s.clone(),
        at,
        vec![s.find_last(extra.0, extra.1)],
        if skeleton == FINALIZE {
            "REVIEW_READY"
        } else {
            "SLOT_READY"
        },
        None,
        golden(n, &["schedule", "rendered"]),
        (inst(skeleton, fail.1, 0), Some(Lifecycle::Entry)),
    )
}

/// slot[0] closes, is reopened for refinement and fails while refining.
fn reentry_case(ctx: &Ctx, id: &str) -> Case {
    let mut s = Script::new();
    resolve(&mut s, 0, "open_slot", false, false);
    s.step("close_slot", "slot[0]");
    s.step("reopen_slot", "slot[0]").set("slot[0].pending_refine", true);
    let fail = s.len();
    refine(&mut s, 0);
    s.step("close_slot", "slot[0]");
    resolve(&mut s, 1, "open_slot", false, false);
    let extra = s.find_last("select_slot", "slot[1]");
    s.step("finish_slots", "slot[1]");
    finalize(&mut s, &[REFINED, slot_value(1)]);
    render(&mut s);
    ending(&mut s, Ending::Complete);
    ctx.case(
        id,
        Regime::Official,
        s,
        fail,
        vec![extra],
        "SLOT_READY",
        None,
        golden(2, &["schedule", "rendered"]),
        (inst(RESOLVE, "slot[0]", 1), Some(Lifecycle::Entry)),
    )
}

pub fn official() -> Vec<Case> {
    let ctx = Ctx::new();
    vec![
        official_case(
            &ctx,
            "schedule_form-off-01",
            2,
            ("select_slot", "slot[1]"),
            ("select_slot", "slot[0]"),
            Ending::Complete,
        ),
        official_case(
            &ctx,
            "schedule_form-off-02",
            3,
            ("confirm_slot", "slot[2]"),
            ("confirm_slot", "slot[1]"),
            Ending::Notify,
        ),
        reentry_case(&ctx, "schedule_form-off-03"),
        official_case(
            &ctx,
            "schedule_form-off-04",
            4,
            ("finalize_schedule", "final"),
            ("select_slot", "slot[2]"),
            Ending::Notify,
        ),
    ]
}

/// Finalize reads committed slots and commits on its preview; the flow then
/// resumes slot[0] and fails closing it.
pub fn witness() -> WitnessCase {
    let ctx = Ctx::new();
    let mut s = Script::new();
    resolve(&mut s, 0, "open_slot", true, true);
    resolve(&mut s, 1, "open_next_slot", false, false);
    s.step("finish_slots", "slot[1]");
    let vals = [REFINED, slot_value(1)];
    s.step("begin_finalize", "final")
        .read(&["slot[0].value", "slot[1].value"]);
    s.step("finalize_schedule", "final")
        .set("schedule", schedule_text(&vals))
        .read(&["slot[0].value", "slot[1].value"]);
    s.step("preview_schedule", "final")
        .set("preview", "draft.png")
        .read(&["schedule"]);
    s.step("resume_slot", "slot[0]");
    let fail = s.len();
    s.step("close_slot", "slot[0]");
    let case = CaseDraft {
        model: &ctx.model,
        configs: &ctx.configs,
        domain: Domain::ScheduleForm,
        id: "schedule_form-witness".into(),
        regime: Regime::CommitSensitive,
        script: s,
        fail_at: fail,
        extra: vec![],
        coarse_anchor: "INTAKE",
        entry_flavor: Some(Status::Contract),
        goal: Predicate::present(["schedule", "preview"]),
        golden_keys: golden(2, &["schedule", "preview"]),
        expected: (inst(RESOLVE, "slot[0]", 0), None),
    }
    .build();
    WitnessCase {
        case,
        expected_dropped: 2,
    }
}

/// slot[0] is confirmed on Thursday, closed, reopened and refined to Friday
/// before failing to close. Two ordinals share the (skeleton, entity) pair.
pub fn consequence_probe() -> Case {
    let ctx = Ctx::new();
    let mut s = Script::new();
    resolve(&mut s, 0, "open_slot", false, false);
    s.step("close_slot", "slot[0]");
    s.step("reopen_slot", "slot[0]").set("slot[0].pending_refine", true);
    refine(&mut s, 0);
    let fail = s.len();
    s.step("close_slot", "slot[0]");
    ctx.case(
        "schedule_form-probe",
        Regime::CommitSensitive,
        s,
        fail,
        vec![],
        "SLOT_READY",
        Some(Status::Contract),
        golden(1, &[]),
        (inst(RESOLVE, "slot[0]", 1), Some(Lifecycle::Commit)),
    )
}

/// Stale value the probe's ordinal-free restore yields.
pub const PROBE_STALE: &str = "Thursday 10:00";
pub const PROBE_FRESH: &str = REFINED;

const WB_SLOTS: usize = 3;

fn wb_tail(s: &mut Script, vals: &[&str]) -> u64 {
    let fail = s.len() + 1;
    finalize(s, vals);
    render(s);
    ending(s, Ending::Complete);
    fail
}

/// Reviewed control: every slot resolves and leaves through the reviewed exit.
pub fn wrong_boundary_control() -> Case {
    let ctx = Ctx::new();
    let mut s = Script::new();
    sequential_slots(&mut s, WB_SLOTS, false);
    let fail = wb_tail(&mut s, &values(WB_SLOTS, false));
    ctx.case(
        "schedule_form-wb-control",
        Regime::Official,
        s,
        fail,
        vec![],
        "REVIEW_READY",
        None,
        golden(WB_SLOTS, &["schedule", "rendered"]),
        (inst(FINALIZE, "final", 0), Some(Lifecycle::Entry)),
    )
}

/// Candidate variant: slot[1] leaves through the unreviewed
/// `skip_selection` edge right after opening. Returns the case and the
/// position of the skip step.
pub fn wrong_boundary_variant() -> (Case, u64) {
    let ctx = Ctx::new();
    let mut s = Script::new();
    resolve(&mut s, 0, "open_slot", false, false);
    s.step("close_slot", "slot[0]");
    s.step("open_slot", "slot[1]")
        .set("slot[1].candidates", candidates(1))
        .read(&["constraints", "slot[0].value"]);
    let skip = s.len();
    s.step("skip_selection", "slot[1]");
    resolve(&mut s, 2, "open_slot", false, false);
    s.step("finish_slots", "slot[2]");
    let fail = wb_tail(&mut s, &values(WB_SLOTS, false));
    let case = ctx.case(
        "schedule_form-wb-variant",
        Regime::Official,
        s,
        fail,
        vec![],
        "REVIEW_READY",
        None,
        golden(WB_SLOTS, &["schedule", "rendered"]),
        (inst(FINALIZE, "final", 0), Some(Lifecycle::Entry)),
    );
    (case, skip)
}

/// `depth` nested slots, each opened from its predecessor's refinement
/// state; the innermost fails at confirmation.
pub fn depth_case(depth: usize) -> Case {
    assert!((1..=MAX_SLOTS).contains(&depth));
    let ctx = Ctx::new();
    let mut s = Script::new();
    for k in 0..depth {
        let open = if k == 0 { "open_slot" } else { "open_next_slot" };
        resolve(&mut s, k, open, false, false);
    }
    let fail = s.len() - 1;
    ctx.case(
        &format!("schedule_form-depth-{depth}"),
        Regime::CommitSensitive,
        s,
        fail,
        vec![],
        "INTAKE",
        None,
        golden(depth, &[]),
        (inst(RESOLVE, &slot(depth - 1), 0), Some(Lifecycle::Entry)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::ControllerKind;
    use crate::controllers::{recover, run_to_failure, RecoveryOutcome};
    use crate::gate::GateOptions;
    use crate::sidecar::SnapshotMode;

    fn run(case: &Case, kind: ControllerKind) -> RecoveryOutcome {
        let failed = run_to_failure(case, &case.site, SnapshotMode::RegistryOnly).unwrap();
        recover(kind, case, &failed, GateOptions::default()).unwrap()
    }

    #[test]
    fn structure_counts() {
        let c = configs();
        assert_eq!(c.len(), 3);
        assert_eq!(c.commit_predicate_count(), 4);
        assert_eq!(c.exit_predicate_count(), 6);
    }

    #[test]
    fn decisive_case_shape() {
        let case = &commit_sensitive()[0];
        assert_eq!(case.scenario.script.len(), 26);
        assert_eq!(case.site.seq, 25);
        let retry = run(case, ControllerKind::RetryOnly);
        assert_eq!(retry.replay_trace.len(), 26);
        let frozen = run(case, ControllerKind::CompFrozen);
        assert_eq!(frozen.status, Status::Ok);
        assert_eq!(frozen.replay_trace.len(), 1);
        assert_eq!(run(case, ControllerKind::CompEntryOnly).status, Status::NoRecov);
    }

    #[test]
    fn witness_blocks_on_two_consumers() {
        let w = witness();
        let o = run(&w.case, ControllerKind::CompFrozen);
        assert_eq!(o.status, Status::Blocked);
        let failed = run_to_failure(&w.case, &w.case.site, SnapshotMode::RegistryOnly).unwrap();
        let off = GateOptions {
            consumer_guard: false,
            ..GateOptions::default()
        };
        let o = recover(ControllerKind::CompFrozen, &w.case, &failed, off).unwrap();
        assert_eq!(o.dropped_consumers.len(), w.expected_dropped);
        assert_eq!(o.status, Status::Contract);
    }

    #[test]
    fn depth_cases_nest() {
        for d in 1..=MAX_SLOTS {
            let case = depth_case(d);
            let failed = run_to_failure(&case, &case.site, SnapshotMode::Inline).unwrap();
            let live = failed
                .runtime
                .sidecar
                .instances()
                .iter()
                .filter(|i| i.status.is_live())
                .count();
            assert_eq!(live, d);
        }
    }
}

#[cfg(test)]
mod case_tests {
    use super::*;
    use crate::domains::check::case_contract;

    #[test]
    fn every_case_meets_its_contract() {
        for case in official().iter().chain(commit_sensitive().iter()) {
            case_contract(case);
        }
        case_contract(&wrong_boundary_control());
    }
}
