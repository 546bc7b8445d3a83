//! Navigation domain: resolve trip stops, plan routes, then guide.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::case::{Case, Domain, Regime, Status, WitnessCase};
use crate::contracts::{ConfigSet, Predicate};
use crate::sidecar::{InstanceId, Lifecycle};

use super::builder::{set, CaseDraft, Model, Script, SkeletonSpec};

pub const MAX_STOPS: usize = 4;
const POIS: [&str; 5] = ["Harbor Cafe", "City Museum", "North Park", "Old Bridge", "Market Hall"];

pub fn stop(k: usize) -> String {
    format!("stop[{k}]")
}

pub fn model() -> Model {
    let mut m = Model::new("INTAKE");
    m.states(&[
        "INTAKE",
        "STOP_READY",
        "ROUTES_PLANNED",
        "DONE",
        "WAITING_POI_SELECTION",
        "POI_CONFIRMING",
        "WAITING_QUERY_REFINEMENT",
        "ROUTING",
        "ROUTE_REVIEW",
        "ROUTE_CONFIRMED",
        "GUIDING",
        "GUIDANCE_READY",
        "ARRIVED",
        "CANCELLED",
    ]);
    m.edge("INTAKE", "open_stop", "WAITING_POI_SELECTION")
        .edge("STOP_READY", "open_stop", "WAITING_POI_SELECTION")
        .edge("WAITING_POI_SELECTION", "select_poi", "POI_CONFIRMING")
        .edge("POI_CONFIRMING", "review_poi", "WAITING_QUERY_REFINEMENT")
        .edge("WAITING_QUERY_REFINEMENT", "refine_query", "WAITING_QUERY_REFINEMENT")
        .edge("WAITING_QUERY_REFINEMENT", "confirm_stop", "WAITING_QUERY_REFINEMENT")
        .edge("WAITING_QUERY_REFINEMENT", "close_stop", "STOP_READY")
        .edge("WAITING_QUERY_REFINEMENT", "stops_done", "ROUTES_PLANNED")
        .edge("WAITING_QUERY_REFINEMENT", "finish_trip", "DONE")
        .edge("WAITING_QUERY_REFINEMENT", "open_next_stop", "WAITING_POI_SELECTION")
        .edge("WAITING_POI_SELECTION", "skip_poi", "STOP_READY")
        .edge("POI_CONFIRMING", "defer_poi", "STOP_READY")
        .edge("STOP_READY", "reopen_stop", "WAITING_QUERY_REFINEMENT")
        .edge("STOP_READY", "plan_routes", "ROUTING")
        .edge("ROUTING", "draft_route", "ROUTE_REVIEW")
        .edge("ROUTE_REVIEW", "approve_route", "ROUTE_CONFIRMED")
        .edge("ROUTE_CONFIRMED", "publish_routes", "ROUTES_PLANNED")
        .edge("ROUTE_CONFIRMED", "finish", "DONE")
        .edge("ROUTES_PLANNED", "start_guidance", "GUIDING")
        .edge("GUIDING", "prepare_guidance", "GUIDANCE_READY")
        .edge("GUIDANCE_READY", "arrive", "ARRIVED")
        .edge("ARRIVED", "complete", "DONE")
        .edge("INTAKE", "cancel_trip", "CANCELLED")
        .edge("STOP_READY", "cancel_trip", "CANCELLED");
    m.keys([
        "trip_request",
        "route_draft",
        "route_approved",
        "routes",
        "guidance",
        "arrival",
    ]);
    for k in 0..MAX_STOPS {
        m.entity(&stop(k), &["candidates", "poi", "query", "confirmed"]);
    }
    m.entity("trip", &[]);

    let wqr = || Predicate::state("WAITING_QUERY_REFINEMENT");
    let confirmed = || Predicate::equal("{entity}.confirmed", true);
    m.predicate(
        "stop_confirmed",
        Predicate::all(vec![wqr(), Predicate::present(["{entity}.poi"]), confirmed()]),
    )
    .predicate(
        "stop_refined",
        Predicate::all(vec![
            wqr(),
            Predicate::present(["{entity}.query", "{entity}.poi"]),
            confirmed(),
        ]),
    )
    .predicate(
        "stop_handoff",
        Predicate::all(vec![Predicate::present(["{entity}.poi"]), confirmed()]),
    )
    .predicate(
        "route_approved",
        Predicate::all(vec![
            Predicate::state("ROUTE_CONFIRMED"),
            Predicate::equal("route_approved", true),
        ]),
    )
    .predicate("routes_handoff", Predicate::present(["routes"]))
    .predicate(
        "guidance_ready",
        Predicate::all(vec![
            Predicate::state("GUIDANCE_READY"),
            Predicate::present(["guidance"]),
        ]),
    )
    .predicate("arrived_handoff", Predicate::present(["arrival"]));

    let pois: Vec<String> = (0..MAX_STOPS).map(|k| format!("{}.poi", stop(k))).collect();
    let poi_inputs: Vec<&str> = pois.iter().map(String::as_str).collect();
    m.skeleton(
        SkeletonSpec {
            id: "ResolveStop",
            internal: &["WAITING_POI_SELECTION", "POI_CONFIRMING", "WAITING_QUERY_REFINEMENT"],
            entry: &["WAITING_POI_SELECTION", "WAITING_QUERY_REFINEMENT"],
            commit: &["stop_confirmed", "stop_refined"],
            exits: &[
                ("WAITING_QUERY_REFINEMENT", "STOP_READY", "stop_handoff"),
                ("WAITING_QUERY_REFINEMENT", "ROUTES_PLANNED", "stop_handoff"),
                ("WAITING_QUERY_REFINEMENT", "DONE", "stop_handoff"),
            ],
            pending: &[("POI_CONFIRMING", "STOP_READY")],
            inputs: &["trip_request", "stop[0].poi"],
            outputs: &["{entity}.candidates", "{entity}.poi", "{entity}.confirmed"],
            effects: &[],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "PlanRoutes",
            internal: &["ROUTING", "ROUTE_REVIEW", "ROUTE_CONFIRMED"],
            entry: &["ROUTING"],
            commit: &["route_approved"],
            exits: &[
                ("ROUTE_CONFIRMED", "ROUTES_PLANNED", "routes_handoff"),
                ("ROUTE_CONFIRMED", "DONE", "routes_handoff"),
            ],
            pending: &[],
            inputs: &poi_inputs,
            outputs: &["route_draft", "route_approved", "routes"],
            effects: &[],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "Guidance",
            internal: &["GUIDING", "GUIDANCE_READY", "ARRIVED"],
            entry: &["GUIDING"],
            commit: &["guidance_ready"],
            exits: &[("ARRIVED", "DONE", "arrived_handoff")],
            pending: &[],
            inputs: &["routes"],
            outputs: &["guidance", "arrival"],
            effects: &[],
        }
        .build(),
    );
    m
}

pub fn configs() -> Arc<ConfigSet> {
    model().configs()
}

const RESOLVE: &str = "ResolveStop";

fn poi(k: usize) -> &'static str {
    POIS[k % POIS.len()]
}

fn refined_poi(k: usize) -> String {
    format!("{} (north entrance)", poi(k))
}

fn poi_key(k: usize) -> String {
    format!("{}.poi", stop(k))
}

fn open(s: &mut Script, k: usize, action: &str) {
    let e = stop(k);
    let candidates = (0..3).map(|i| poi(k + i)).collect::<Vec<_>>().join(" | ");
    let st = s
        .step(action, &e)
        .set(&format!("{e}.candidates"), candidates)
        .read(&["trip_request"]);
    if k == 0 {
        st.set("trip_request", "harbor loop, 3 hours");
    } else {
        st.read(&["stop[0].poi"]);
    }
}

/// open, select, review. Leaves the stop in WAITING_QUERY_REFINEMENT uncommitted.
fn pick(s: &mut Script, k: usize, action: &str) {
    let e = stop(k);
    open(s, k, action);
    s.step("select_poi", &e).set(&poi_key(k), poi(k));
    s.step("review_poi", &e).read(&[&poi_key(k)]);
}

fn confirm(s: &mut Script, k: usize) {
    let e = stop(k);
    s.step("confirm_stop", &e)
        .set(&format!("{e}.confirmed"), true)
        .read(&[&poi_key(k)]);
}

fn refine(s: &mut Script, k: usize) {
    let e = stop(k);
    s.step("refine_query", &e)
        .set(&format!("{e}.query"), "step-free entrance")
        .set(&poi_key(k), refined_poi(k))
        .set(&format!("{e}.confirmed"), true);
}

fn sequential(s: &mut Script, n: usize) {
    for k in 0..n {
        pick(s, k, "open_stop");
        confirm(s, k);
        s.step("close_stop", &stop(k));
    }
}

/// plan, draft, approve. Leaves PlanRoutes committed in ROUTE_CONFIRMED.
fn plan(s: &mut Script, n: usize) {
    let keys: Vec<String> = (0..n).map(poi_key).collect();
    let reads: Vec<&str> = keys.iter().map(String::as_str).collect();
    s.step("plan_routes", "trip").read(&reads);
    s.step("draft_route", "trip")
        .set("route_draft", format!("{n} legs"))
        .read(&reads)
        .cost(2);
    s.step("approve_route", "trip")
        .set("route_approved", true)
        .set("routes", format!("route via {n} stops"))
        .read(&["route_draft"]);
}

#[derive(Clone, Copy)]
enum Ending {
    Guidance,
    Finish,
}

fn ending(s: &mut Script, end: Ending) {
    match end {
        Ending::Finish => {
            s.step("finish", "trip");
        }
        Ending::Guidance => {
            s.step("publish_routes", "trip");
            s.step("start_guidance", "trip");
            s.step("prepare_guidance", "trip")
                .set("guidance", "turn-by-turn")
                .read(&["routes"]);
            s.step("arrive", "trip").set("arrival", "on time").read(&["guidance"]);
            s.step("complete", "trip");
        }
    }
}

fn golden(n: usize, end: Ending) -> BTreeSet<String> {
    let mut keys = set((0..n).map(poi_key));
    keys.insert("routes".into());
    if matches!(end, Ending::Guidance) {
        keys.insert("arrival".into());
    }
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
        golden_keys: BTreeSet<String>,
        expected: (InstanceId, Option<Lifecycle>),
    ) -> Case {
        CaseDraft {
            model: &self.model,
            configs: &self.configs,
            domain: Domain::Navigation,
            id: id.into(),
            regime,
            script,
            fail_at,
            extra,
            coarse_anchor: anchor,
            entry_flavor: (regime == Regime::CommitSensitive).then_some(Status::Contract),
            goal: Predicate::present(["routes"]),
            golden_keys,
            expected,
        }
        .build()
    }
}

fn official_case(ctx: &Ctx, id: &str, n: usize, fail: (&str, &str), extra: (&str, &str), end: Ending) -> Case {
    let mut s = Script::new();
    sequential(&mut s, n);
    plan(&mut s, n);
    ending(&mut s, end);
    let (skeleton, anchor) = match fail.0 {
        "plan_routes" | "draft_route" | "approve_route" => ("PlanRoutes", "STOP_READY"),
        "prepare_guidance" | "arrive" => ("Guidance", "ROUTES_PLANNED"),
        _ => (RESOLVE, "STOP_READY"),
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
        golden(n, end),
        (InstanceId::new(skeleton, fail.1, 0), Some(Lifecycle::Entry)),
    )
}

/// stop[0] closes, is reopened and fails while refining its query.
fn reentry_case(ctx: &Ctx, id: &str) -> Case {
    let mut s = Script::new();
    pick(&mut s, 0, "open_stop");
    confirm(&mut s, 0);
    s.step("close_stop", "stop[0]");
    s.step("reopen_stop", "stop[0]").set("stop[0].confirmed", false);
    let fail = s.len();
    refine(&mut s, 0);
    s.step("close_stop", "stop[0]");
    pick(&mut s, 1, "open_stop");
    let extra = s.find_last("select_poi", "stop[1]");
    confirm(&mut s, 1);
    s.step("close_stop", "stop[1]");
    plan(&mut s, 2);
    ending(&mut s, Ending::Finish);
    ctx.case(
        id,
        Regime::Official,
        s,
        fail,
        vec![extra],
        "STOP_READY",
        golden(2, Ending::Finish),
        (InstanceId::new(RESOLVE, "stop[0]", 1), Some(Lifecycle::Entry)),
    )
}

pub fn official() -> Vec<Case> {
    let ctx = Ctx::new();
    vec![
        official_case(
            &ctx,
            "navigation-off-01",
            2,
            ("select_poi", "stop[1]"),
            ("select_poi", "stop[0]"),
            Ending::Guidance,
        ),
        reentry_case(&ctx, "navigation-off-02"),
        official_case(
            &ctx,
            "navigation-off-03",
            2,
            ("draft_route", "trip"),
            ("select_poi", "stop[1]"),
            Ending::Guidance,
        ),
        official_case(
            &ctx,
            "navigation-off-04",
            3,
            ("prepare_guidance", "trip"),
            ("confirm_stop", "stop[0]"),
            Ending::Guidance,
        ),
    ]
}

/// How stop[0] commits and where it then fails.
#[derive(Clone, Copy)]
enum Shape {
    ConfirmThenClose,
    RefineThenClose,
    ConfirmThenRefine,
}

/// stop[0] stays open while `consumers` later stops read its POI and commit.
fn parked(ctx: &Ctx, id: &str, consumers: usize, shape: Shape, end: Ending) -> Case {
    let mut s = Script::new();
    pick(&mut s, 0, "open_stop");
    for k in 1..=consumers {
        pick(&mut s, k, "open_next_stop");
        confirm(&mut s, k);
    }
    match shape {
        Shape::RefineThenClose => refine(&mut s, 0),
        _ => confirm(&mut s, 0),
    }
    let extra = s.len() - 1;
    let fail = s.len();
    if let Shape::ConfirmThenRefine = shape {
        refine(&mut s, 0);
    }
    s.step("close_stop", "stop[0]");
    for k in 1..=consumers {
        s.step("reopen_stop", &stop(k));
        s.step("close_stop", &stop(k));
    }
    let n = consumers + 1;
    plan(&mut s, n);
    ending(&mut s, end);
    ctx.case(
        id,
        Regime::CommitSensitive,
        s,
        fail,
        vec![extra],
        "INTAKE",
        golden(n, end),
        (InstanceId::new(RESOLVE, "stop[0]", 0), Some(Lifecycle::Commit)),
    )
}

pub fn commit_sensitive() -> Vec<Case> {
    use Ending::*;
    use Shape::*;
    let ctx = Ctx::new();
    let table = [
        (1, ConfirmThenClose, Guidance),
        (1, RefineThenClose, Finish),
        (2, ConfirmThenClose, Guidance),
        (2, RefineThenClose, Finish),
        (1, ConfirmThenRefine, Guidance),
        (2, ConfirmThenRefine, Finish),
        (3, ConfirmThenClose, Guidance),
        (3, RefineThenClose, Finish),
    ];
    table
        .iter()
        .enumerate()
        .map(|(i, (c, shape, end))| parked(&ctx, &format!("navigation-cs-{:02}", i + 1), *c, *shape, *end))
        .collect()
}

/// stop[1] reads stop[0], commits and exits; stop[0] is reopened and fails closing.
pub fn witness() -> WitnessCase {
    let ctx = Ctx::new();
    let mut s = Script::new();
    pick(&mut s, 0, "open_stop");
    confirm(&mut s, 0);
    pick(&mut s, 1, "open_next_stop");
    confirm(&mut s, 1);
    s.step("close_stop", "stop[1]");
    s.step("reopen_stop", "stop[0]");
    let fail = s.len();
    s.step("close_stop", "stop[0]");
    let case = CaseDraft {
        model: &ctx.model,
        configs: &ctx.configs,
        domain: Domain::Navigation,
        id: "navigation-witness".into(),
        regime: Regime::CommitSensitive,
        script: s,
        fail_at: fail,
        extra: vec![],
        coarse_anchor: "INTAKE",
        entry_flavor: Some(Status::Contract),
        goal: Predicate::present(["stop[0].poi", "stop[1].poi"]),
        golden_keys: set([poi_key(0), poi_key(1)]),
        expected: (InstanceId::new(RESOLVE, "stop[0]", 0), None),
    }
    .build();
    WitnessCase {
        case,
        expected_dropped: 1,
    }
}

fn wb_case(ctx: &Ctx, id: &str, s: Script, n: usize) -> Case {
    let fail = s.find_last("draft_route", "trip");
    ctx.case(
        id,
        Regime::Official,
        s,
        fail,
        vec![],
        "STOP_READY",
        golden(n, Ending::Finish),
        (InstanceId::new("PlanRoutes", "trip", 0), Some(Lifecycle::Entry)),
    )
}

const WB_STOPS: usize = 3;

/// Reviewed control: every stop leaves through WAITING_QUERY_REFINEMENT.
pub fn wrong_boundary_control() -> Case {
    let ctx = Ctx::new();
    let mut s = Script::new();
    sequential(&mut s, WB_STOPS);
    plan(&mut s, WB_STOPS);
    ending(&mut s, Ending::Finish);
    wb_case(&ctx, "navigation-wb-control", s, WB_STOPS)
}

/// Candidate variant: stop[1] leaves through the unreviewed `skip_poi` edge
/// right after opening. Returns the case and the position of the skip step.
pub fn wrong_boundary_variant() -> (Case, u64) {
    let ctx = Ctx::new();
    let mut s = Script::new();
    pick(&mut s, 0, "open_stop");
    confirm(&mut s, 0);
    s.step("close_stop", "stop[0]");
    open(&mut s, 1, "open_stop");
    let skip = s.len();
    s.step("skip_poi", "stop[1]");
    pick(&mut s, 2, "open_stop");
    confirm(&mut s, 2);
    s.step("close_stop", "stop[2]");
    plan(&mut s, WB_STOPS);
    ending(&mut s, Ending::Finish);
    (wb_case(&ctx, "navigation-wb-variant", s, WB_STOPS), skip)
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
        assert_eq!(c.pending_count(), 1);
    }

    #[test]
    fn every_case_meets_its_contract() {
        let cases: Vec<Case> = official().into_iter().chain(commit_sensitive()).collect();
        assert_eq!(cases.len(), 12);
        cases.iter().for_each(case_contract);
        witness_contract(&witness());
    }
}
