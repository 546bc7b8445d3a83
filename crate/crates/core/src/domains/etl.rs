//! ETL pipeline domain: extract sources, transform one batch, stage and load
//! it into the warehouse.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::case::{Case, Domain, Regime, Status, WitnessCase};
use crate::contracts::{ConfigSet, EffectClass, Predicate};
use crate::sidecar::{InstanceId, Lifecycle};

use super::builder::{set, CaseDraft, Model, Script, SkeletonSpec};

pub const MAX_SOURCES: usize = 3;
const SOURCES: [&str; 3] = ["orders.csv", "customers.parquet", "refunds.json"];

pub fn source(k: usize) -> String {
    format!("source[{k}]")
}

pub fn model() -> Model {
    let mut m = Model::new("INTAKE");
    m.states(&[
        "INTAKE",
        "EXTRACTED",
        "TRANSFORMED",
        "DONE",
        "EXTRACTING",
        "VALIDATING_SOURCE",
        "TRANSFORMING",
        "TRANSFORM_REVIEW",
        "STAGING",
        "LOADING",
        "LOAD_VERIFY",
    ]);
    m.edge("INTAKE", "begin_extract", "EXTRACTING")
        .edge("EXTRACTED", "begin_extract", "EXTRACTING")
        .edge("EXTRACTING", "pull", "VALIDATING_SOURCE")
        .edge("VALIDATING_SOURCE", "validate_source", "VALIDATING_SOURCE")
        .edge("VALIDATING_SOURCE", "close_extract", "EXTRACTED")
        .edge("VALIDATING_SOURCE", "abort_extract", "DONE")
        .edge("VALIDATING_SOURCE", "extract_next", "EXTRACTING")
        .edge("EXTRACTED", "reopen_extract", "VALIDATING_SOURCE")
        .edge("EXTRACTED", "begin_transform", "TRANSFORMING")
        .edge("TRANSFORMING", "apply_rules", "TRANSFORM_REVIEW")
        .edge("TRANSFORM_REVIEW", "approve_transform", "TRANSFORM_REVIEW")
        .edge("TRANSFORM_REVIEW", "close_transform", "TRANSFORMED")
        .edge("TRANSFORMED", "begin_load", "STAGING")
        .edge("STAGING", "stage_rows", "STAGING")
        .edge("STAGING", "load_rows", "LOADING")
        .edge("LOADING", "verify_load", "LOAD_VERIFY")
        .edge("LOAD_VERIFY", "publish_load", "LOAD_VERIFY")
        .edge("LOAD_VERIFY", "close_load", "DONE");
    m.keys([
        "schema",
        "transformed",
        "transform_approved",
        "staged",
        "loaded",
        "load_verified",
        "manifest",
    ]);
    for k in 0..MAX_SOURCES {
        m.entity(&source(k), &["rows", "valid"]);
    }
    m.entity("batch", &[]).entity("warehouse", &[]);
    m.effect("load", EffectClass::Irreversible, None)
        .effect("stage", EffectClass::Compensable, Some("truncate_stage"));

    m.predicate(
        "source_valid",
        Predicate::all(vec![
            Predicate::state("VALIDATING_SOURCE"),
            Predicate::present(["{entity}.rows"]),
            Predicate::equal("{entity}.valid", true),
        ]),
    )
    .predicate("source_handoff", Predicate::present(["{entity}.rows"]))
    .predicate(
        "transform_approved",
        Predicate::all(vec![
            Predicate::state("TRANSFORM_REVIEW"),
            Predicate::equal("transform_approved", true),
        ]),
    )
    .predicate("transform_handoff", Predicate::present(["transformed"]))
    .predicate(
        "load_verified",
        Predicate::all(vec![
            Predicate::state("LOAD_VERIFY"),
            Predicate::equal("load_verified", true),
        ]),
    )
    .predicate("load_handoff", Predicate::present(["manifest"]));

    let rows: Vec<String> = (0..MAX_SOURCES).map(|k| format!("{}.rows", source(k))).collect();
    let row_inputs: Vec<&str> = rows.iter().map(String::as_str).collect();
    m.skeleton(
        SkeletonSpec {
            id: "Extract",
            internal: &["EXTRACTING", "VALIDATING_SOURCE"],
            entry: &["EXTRACTING", "VALIDATING_SOURCE"],
            commit: &["source_valid"],
            exits: &[
                ("VALIDATING_SOURCE", "EXTRACTED", "source_handoff"),
                ("VALIDATING_SOURCE", "DONE", "source_handoff"),
            ],
            pending: &[],
            inputs: &["schema", "source[0].rows"],
            outputs: &["{entity}.rows", "{entity}.valid"],
            effects: &[],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "Transform",
            internal: &["TRANSFORMING", "TRANSFORM_REVIEW"],
            entry: &["TRANSFORMING"],
            commit: &["transform_approved"],
            exits: &[("TRANSFORM_REVIEW", "TRANSFORMED", "transform_handoff")],
            pending: &[],
            inputs: &row_inputs,
            outputs: &["transformed", "transform_approved"],
            effects: &[],
        }
        .build(),
    )
    .skeleton(
        SkeletonSpec {
            id: "Load",
            internal: &["STAGING", "LOADING", "LOAD_VERIFY"],
            entry: &["STAGING"],
            commit: &["load_verified"],
            exits: &[("LOAD_VERIFY", "DONE", "load_handoff")],
            pending: &[],
            inputs: &["transformed"],
            outputs: &["staged", "loaded", "load_verified", "manifest"],
            effects: &["load", "stage"],
        }
        .build(),
    );
    m
}

pub fn configs() -> Arc<ConfigSet> {
    model().configs()
}

const EXTRACT: &str = "Extract";
const LOAD: &str = "Load";

fn rows_key(k: usize) -> String {
    format!("{}.rows", source(k))
}

/// begin, pull. Leaves the source in VALIDATING_SOURCE uncommitted.
fn pull(s: &mut Script, k: usize, begin: &str) {
    let e = source(k);
    let st = s.step(begin, &e);
    if k == 0 {
        st.set("schema", "v7");
    } else {
        st.read(&["source[0].rows"]);
    }
    s.step("pull", &e)
        .set(
            &rows_key(k),
            format!("{} ({} rows)", SOURCES[k % SOURCES.len()], 1000 * (k + 1)),
        )
        .read(&["schema"])
        .cost(3);
}

fn validate(s: &mut Script, k: usize) {
    let e = source(k);
    s.step("validate_source", &e)
        .set(&format!("{e}.valid"), true)
        .read(&[&rows_key(k)]);
}

fn sequential(s: &mut Script, n: usize) {
    for k in 0..n {
        pull(s, k, "begin_extract");
        validate(s, k);
        s.step("close_extract", &source(k));
    }
}

fn transform(s: &mut Script, n: usize) {
    let keys: Vec<String> = (0..n).map(rows_key).collect();
    let reads: Vec<&str> = keys.iter().map(String::as_str).collect();
    s.step("begin_transform", "batch").read(&reads);
    s.step("apply_rules", "batch")
        .set("transformed", format!("joined {n} sources"))
        .read(&reads)
        .cost(2);
    s.step("approve_transform", "batch")
        .set("transform_approved", true)
        .read(&["transformed"]);
    s.step("close_transform", "batch");
}

/// begin, stage, load, verify, publish, close.
fn load(s: &mut Script, n: usize) {
    s.step("begin_load", "warehouse").read(&["transformed"]);
    s.step("stage_rows", "warehouse")
        .set("staged", true)
        .read(&["transformed"])
        .emit("stage", format!("stage_{n}"));
    s.step("load_rows", "warehouse")
        .set("loaded", true)
        .read(&["staged"])
        .emit("load", format!("load_{n}"))
        .cost(4);
    s.step("verify_load", "warehouse")
        .set("load_verified", true)
        .read(&["loaded"]);
    s.step("publish_load", "warehouse")
        .set("manifest", format!("manifest-{n}"))
        .read(&["loaded"]);
    s.step("close_load", "warehouse");
}

fn golden(n: usize) -> BTreeSet<String> {
    let mut keys = set((0..n).map(rows_key));
    keys.extend(["transformed", "loaded", "manifest"].map(String::from));
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
            domain: Domain::EtlPipeline,
            id: id.into(),
            regime,
            script,
            fail_at,
            extra,
            coarse_anchor: anchor,
            entry_flavor: flavor,
            goal: Predicate::present(["loaded", "manifest"]),
            golden_keys,
            expected,
        }
        .build()
    }
}

fn full(n: usize) -> Script {
    let mut s = Script::new();
    sequential(&mut s, n);
    transform(&mut s, n);
    load(&mut s, n);
    s
}

fn official_case(ctx: &Ctx, id: &str, n: usize, fail: (&str, &str), extra: (&str, &str)) -> Case {
    let s = full(n);
    let (skeleton, anchor) = match fail.1 {
        "batch" => ("Transform", "EXTRACTED"),
        "warehouse" => (LOAD, "TRANSFORMED"),
        "source[0]" => (EXTRACT, "INTAKE"),
        _ => (EXTRACT, "EXTRACTED"),
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
            "etl_pipeline-off-01",
            2,
            ("pull", "source[1]"),
            ("pull", "source[0]"),
        ),
        official_case(
            &ctx,
            "etl_pipeline-off-02",
            3,
            ("validate_source", "source[2]"),
            ("validate_source", "source[1]"),
        ),
        official_case(
            &ctx,
            "etl_pipeline-off-03",
            2,
            ("apply_rules", "batch"),
            ("pull", "source[1]"),
        ),
        official_case(
            &ctx,
            "etl_pipeline-off-04",
            1,
            ("approve_transform", "batch"),
            ("validate_source", "source[0]"),
        ),
        official_case(
            &ctx,
            "etl_pipeline-off-05",
            2,
            ("stage_rows", "warehouse"),
            ("apply_rules", "batch"),
        ),
        official_case(
            &ctx,
            "etl_pipeline-off-06",
            2,
            ("load_rows", "warehouse"),
            ("stage_rows", "warehouse"),
        ),
        official_case(
            &ctx,
            "etl_pipeline-off-07",
            3,
            ("pull", "source[0]"),
            ("approve_transform", "batch"),
        ),
    ]
}

/// Rows are loaded and verified; a later load step fails.
fn after_load(ctx: &Ctx, id: &str, n: usize, fail_action: &str) -> Case {
    let s = full(n);
    let fail = s.find_last(fail_action, "warehouse");
    let extra = s.find_last("verify_load", "warehouse");
    ctx.case(
        id,
        Regime::CommitSensitive,
        s,
        fail,
        vec![extra],
        "TRANSFORMED",
        Some(Status::NoRecov),
        golden(n),
        (InstanceId::new(LOAD, "warehouse", 0), Some(Lifecycle::Commit)),
    )
}

/// source[0] stays open while `consumers` later sources read it and commit.
fn parked(ctx: &Ctx, id: &str, consumers: usize) -> Case {
    let mut s = Script::new();
    pull(&mut s, 0, "begin_extract");
    for k in 1..=consumers {
        pull(&mut s, k, "extract_next");
        validate(&mut s, k);
    }
    validate(&mut s, 0);
    let extra = s.len() - 1;
    let fail = s.len();
    s.step("close_extract", "source[0]");
    for k in 1..=consumers {
        s.step("reopen_extract", &source(k));
        s.step("close_extract", &source(k));
    }
    let n = consumers + 1;
    transform(&mut s, n);
    load(&mut s, n);
    ctx.case(
        id,
        Regime::CommitSensitive,
        s,
        fail,
        vec![extra],
        "INTAKE",
        Some(Status::Contract),
        golden(n),
        (InstanceId::new(EXTRACT, "source[0]", 0), Some(Lifecycle::Commit)),
    )
}

pub fn commit_sensitive() -> Vec<Case> {
    let ctx = Ctx::new();
    vec![
        after_load(&ctx, "etl_pipeline-cs-01", 1, "publish_load"),
        after_load(&ctx, "etl_pipeline-cs-02", 2, "publish_load"),
        after_load(&ctx, "etl_pipeline-cs-03", 3, "publish_load"),
        after_load(&ctx, "etl_pipeline-cs-04", 1, "close_load"),
        after_load(&ctx, "etl_pipeline-cs-05", 2, "close_load"),
        parked(&ctx, "etl_pipeline-cs-06", 1),
        parked(&ctx, "etl_pipeline-cs-07", 2),
    ]
}

/// source[1] reads source[0], commits and exits; source[0] is reopened and fails closing.
pub fn witness() -> WitnessCase {
    let ctx = Ctx::new();
    let mut s = Script::new();
    pull(&mut s, 0, "begin_extract");
    validate(&mut s, 0);
    pull(&mut s, 1, "extract_next");
    validate(&mut s, 1);
    s.step("close_extract", "source[1]");
    s.step("reopen_extract", "source[0]");
    let fail = s.len();
    s.step("close_extract", "source[0]");
    let case = CaseDraft {
        model: &ctx.model,
        configs: &ctx.configs,
        domain: Domain::EtlPipeline,
        id: "etl_pipeline-witness".into(),
        regime: Regime::CommitSensitive,
        script: s,
        fail_at: fail,
        extra: vec![],
        coarse_anchor: "INTAKE",
        entry_flavor: Some(Status::Contract),
        goal: Predicate::present(["source[0].rows", "source[1].rows"]),
        golden_keys: set([rows_key(0), rows_key(1)]),
        expected: (InstanceId::new(EXTRACT, "source[0]", 0), None),
    }
    .build();
    WitnessCase {
        case,
        expected_dropped: 1,
    }
}
