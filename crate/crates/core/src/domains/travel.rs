//! Travel-planning domain: plan legs, book the trip, issue an itinerary.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::case::{Case, Domain, Regime, Status};
use crate::contracts::{ConfigSet, EffectClass, Predicate};
use crate::sidecar::{InstanceId, Lifecycle};

use super::builder::{set, CaseDraft, Model, Script, SkeletonSpec};

pub const MAX_LEGS: usize = 3;
const LEGS: [&str; 3] = ["LIS-MAD rail", "MAD-BCN flight", "BCN-MRS ferry"];

pub fn leg(k: usize) -> String {
    format!("leg[{k}]")
}

pub fn model() -> Model {
    let mut m = Model::new("INTAKE");
    m.states(&[
        "INTAKE",
        "LEGS_READY",
        "BOOKED",
        "DONE",
        "SEARCHING",
        "COMPARING",
        "HOLDING",
        "BOOKING",
        "CONFIRMING",
        "ITINERARY",
        "ISSUING",
    ]);
    m.edge("INTAKE", "open_leg", "SEARCHING")
        .edge("LEGS_READY", "open_leg", "SEARCHING")
        .edge("SEARCHING", "search", "COMPARING")
        .edge("COMPARING", "choose", "HOLDING")
        .edge("HOLDING", "hold", "HOLDING")
        .edge("HOLDING", "close_leg", "LEGS_READY")
        .edge("HOLDING", "drop_trip", "DONE")
        .edge("LEGS_READY", "begin_booking", "BOOKING")
        .edge("BOOKING", "quote", "CONFIRMING")
        .edge("CONFIRMING", "book", "CONFIRMING")
        .edge("CONFIRMING", "confirm_booking", "CONFIRMING")
        .edge("CONFIRMING", "close_booking", "BOOKED")
        .edge("BOOKED", "start_itinerary", "ITINERARY")
        .edge("ITINERARY", "compose", "ITINERARY")
        .edge("ITINERARY", "approve_itinerary", "ISSUING")
        .edge("ISSUING", "issue", "ISSUING")
        .edge("ISSUING", "close_itinerary", "DONE");
    m.keys([
        "travelers",
        "quote",
        "booking_ref",
        "booking_confirmed",
        "itinerary",
        "issued",
    ]);
    for k in 0..MAX_LEGS {
        m.entity(&leg(k), &["options", "choice", "held"]);
    }
    m.entity("trip", &[]);
    m.effect("booking", EffectClass::Irreversible, None);

    m.predicate(
        "leg_held",
        Predicate::all(vec![
            Predicate::state("HOLDING"),
            Predicate::present(["{entity}.choice"]),
            Predicate::equal("{entity}.held", true),
        ]),
    )
    .predicate("leg_handoff", Predicate::present(["{entity}.choice"]))
    .predicate(
        "booking_confirmed",
        Predicate::all(vec![
            Predicate::state("CONFIRMING"),
            Predicate::present(["booking_ref"]),
            Predicate::equal("booking_confirmed", true),
        ]),
    )
    .predicate("booking_handoff", Predicate::present(["booking_ref"]))
    .predicate(
        "itinerary_ready",
        Predicate::all(vec![Predicate::state("ISSUING"), Predicate::present(["itinerary"])]),
    )
    .predicate("itinerary_handoff", Predicate::present(["issued"]));

    let choices: Vec<String> = (0..MAX_LEGS).map(|k| format!("{}.choice", leg(k))).collect();
    let choice_inputs: Vec<&str> = choices.iter().map(String::as_str).collect();
    m.skeleton(
        SkeletonSpec {
            id: "PlanLeg",
            internal: &["SEARCHING", "COMPARING", "HOLDING"],
            entry: &["SEARCHING"],
            commit: &["leg_held"],
            exits: &[
                ("HOLDING", "LEGS_READY", "leg_handoff"),
                ("HOLDING", "DONE", "leg_handoff"),
            ],
            pending: &[],
            inputs: &["travelers"],
            outputs: &["{entity}.options", "{entity}.choice", "{entity}.held"],
            effects: &[],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "BookTrip",
            internal: &["BOOKING", "CONFIRMING"],
            entry: &["BOOKING"],
            commit: &["booking_confirmed"],
            exits: &[("CONFIRMING", "BOOKED", "booking_handoff")],
            pending: &[],
            inputs: &choice_inputs,
            outputs: &["quote", "booking_ref", "booking_confirmed"],
            effects: &["booking"],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "IssueItinerary",
            internal: &["ITINERARY", "ISSUING"],
            entry: &["ITINERARY"],
            commit: &["itinerary_ready"],
            exits: &[("ISSUING", "DONE", "itinerary_handoff")],
            pending: &[],
            inputs: &["booking_ref"],
            outputs: &["itinerary", "issued"],
            effects: &[],
        }
        .build(),
    );
    m
}

pub fn configs() -> Arc<ConfigSet> {
    model().configs()
}

fn choice_key(k: usize) -> String {
    format!("{}.choice", leg(k))
}

fn plan_leg(s: &mut Script, k: usize) {
    let e = leg(k);
    let st = s.step("open_leg", &e);
    if k == 0 {
        st.set("travelers", 2);
    } else {
        st.read(&["travelers"]);
    }
    s.step("search", &e)
        .set(&format!("{e}.options"), format!("{} x3", LEGS[k % LEGS.len()]))
        .read(&["travelers"])
        .cost(2);
    s.step("choose", &e)
        .set(&choice_key(k), LEGS[k % LEGS.len()])
        .read(&[&format!("{e}.options")]);
    s.step("hold", &e)
        .set(&format!("{e}.held"), true)
        .read(&[&choice_key(k)]);
    s.step("close_leg", &e);
}

fn full(n: usize) -> Script {
    let mut s = Script::new();
    for k in 0..n {
        plan_leg(&mut s, k);
    }
    let keys: Vec<String> = (0..n).map(choice_key).collect();
    let reads: Vec<&str> = keys.iter().map(String::as_str).collect();
    s.step("begin_booking", "trip").read(&reads);
    s.step("quote", "trip")
        .set("quote", format!("EUR {}", 180 * n))
        .read(&reads);
    s.step("book", "trip")
        .set("booking_ref", "PNR-7QK2")
        .read(&["quote"])
        .emit("booking", format!("{n} legs"))
        .cost(3);
    s.step("confirm_booking", "trip")
        .set("booking_confirmed", true)
        .read(&["booking_ref"]);
    s.step("close_booking", "trip");
    s.step("start_itinerary", "trip").read(&["booking_ref"]);
    s.step("compose", "trip")
        .set("itinerary", format!("{n}-leg itinerary"))
        .read(&["booking_ref"]);
    s.step("approve_itinerary", "trip");
    s.step("issue", "trip").set("issued", true).read(&["itinerary"]);
    s.step("close_itinerary", "trip");
    s
}

fn golden(n: usize) -> BTreeSet<String> {
    let mut keys = set((0..n).map(choice_key));
    keys.extend(["booking_ref", "itinerary", "issued"].map(String::from));
    keys
}

#[allow(clippy::too_many_arguments)]
fn case(
    model: &Model,
    configs: &Arc<ConfigSet>,
    id: &str,
    regime: Regime,
    n: usize,
    fail: (&str, &str),
    extra: (&str, &str),
    expected: (&str, Lifecycle),
) -> Case {
    let script = full(n);
    let fail_at = script.find_last(fail.0, fail.1);
    let extra = vec![script.find_last(extra.0, extra.1)];
    let anchor = match expected.0 {
        "PlanLeg" if fail.1 == "leg[0]" => "INTAKE",
        "PlanLeg" | "BookTrip" => "LEGS_READY",
        _ => "BOOKED",
    };
    CaseDraft {
        model,
        configs,
        domain: Domain::TravelPlanning,
        id: id.into(),
        regime,
        script,
        fail_at,
        extra,
        coarse_anchor: anchor,
        entry_flavor: (regime == Regime::CommitSensitive).then_some(Status::NoRecov),
        goal: Predicate::present(["booking_ref", "issued"]),
        golden_keys: golden(n),
        expected: (InstanceId::new(expected.0, fail.1, 0), Some(expected.1)),
    }
    .build()
}

pub fn official() -> Vec<Case> {
    let m = model();
    let c = m.configs();
    let off = Regime::Official;
    let entry = Lifecycle::Entry;
    vec![
        case(
            &m,
            &c,
            "travel_planning-off-01",
            off,
            2,
            ("search", "leg[1]"),
            ("search", "leg[0]"),
            ("PlanLeg", entry),
        ),
        case(
            &m,
            &c,
            "travel_planning-off-02",
            off,
            3,
            ("choose", "leg[2]"),
            ("hold", "leg[1]"),
            ("PlanLeg", entry),
        ),
        case(
            &m,
            &c,
            "travel_planning-off-03",
            off,
            2,
            ("quote", "trip"),
            ("choose", "leg[1]"),
            ("BookTrip", entry),
        ),
        case(
            &m,
            &c,
            "travel_planning-off-04",
            off,
            1,
            ("compose", "trip"),
            ("search", "leg[0]"),
            ("IssueItinerary", entry),
        ),
    ]
}

/// The booking is made and confirmed; closing it fails afterwards.
pub fn commit_sensitive() -> Vec<Case> {
    let m = model();
    let c = m.configs();
    (1..=MAX_LEGS)
        .map(|n| {
            case(
                &m,
                &c,
                &format!("travel_planning-cs-{n:02}"),
                Regime::CommitSensitive,
                n,
                ("close_booking", "trip"),
                ("confirm_booking", "trip"),
                ("BookTrip", Lifecycle::Commit),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::check::case_contract;

    #[test]
    fn structure_counts() {
        let c = configs();
        assert_eq!(c.len(), 3);
        assert_eq!(c.commit_predicate_count(), 3);
        assert_eq!(c.exit_predicate_count(), 4);
    }

    #[test]
    fn every_case_meets_its_contract() {
        let cases: Vec<Case> = official().into_iter().chain(commit_sensitive()).collect();
        assert_eq!(cases.len(), 7);
        cases.iter().for_each(case_contract);
    }
}
