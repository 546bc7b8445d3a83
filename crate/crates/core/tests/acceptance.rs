//! One pass/fail line per acceptance criterion.
//!
//! Run with `cargo test -p semrec-core --test acceptance`. Every tolerance
//! is pinned below.

use std::io::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semrec::domains;
use semrec::gate::{decide, evaluate_checkpoint, select_rollback, VetoResult};
use semrec::harness::depth::depth_benchmark;
use semrec::sidecar::Lifecycle as L;
use semrec::{
    build_report, run_to_failure, BlockedReason, ControllerKind as K, Domain, GateOptions, Outcome, Regime, Report,
    ReportInputs, RunConfig, RunRecord, Status,
};

const DECISIVE: &str = "schedule_form-cs-01";
const RANDOM_INSTANCES: usize = 1000;
const MIN_PAYLOAD_RATIO: f64 = 5.0;
const MAX_RESTORE_RATIO: f64 = 2.0;
const DEPTH: usize = 5;

struct Verdict {
    id: u8,
    name: &'static str,
    failures: Vec<String>,
    detail: String,
}

impl Verdict {
    fn new(id: u8, name: &'static str) -> Self {
        Self {
            id,
            name,
            failures: Vec::new(),
            detail: String::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn line(&self) -> String {
        let tag = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let mut s = format!("[{tag}] {:>2}. {}: {}", self.id, self.name, self.detail);
        for f in self.failures.iter().take(5) {
            s.push_str(&format!("\n        - {f}"));
        }
        s
    }
}

fn runs<'a>(r: &'a Report, regime: Regime, k: K) -> impl Iterator<Item = &'a RunRecord> + 'a {
    r.runs.iter().filter(move |x| x.regime == regime && x.controller == k)
}

fn paired<'a>(r: &'a Report, x: &RunRecord, k: K) -> &'a RunRecord {
    r.runs
        .iter()
        .find(|y| y.case == x.case && y.repeat == x.repeat && y.controller == k)
        .expect("every controller runs every repeat")
}

fn commit_sensitive(r: &Report) -> Verdict {
    let mut v = Verdict::new(1, "commit-sensitive pattern");
    let entry_flavor: std::collections::BTreeMap<String, Option<Status>> = domains::universe()
        .into_iter()
        .map(|c| (c.id, c.entry_flavor))
        .collect();
    let mut rows = 0;
    for x in runs(r, Regime::CommitSensitive, K::CompFrozen) {
        rows += 1;
        let id = format!("{} r{}", x.case, x.repeat);
        v.check(x.status == Status::Ok, || format!("{id}: frozen status {}", x.status));
        v.check(x.frontier.upstream_replay == 0, || {
            format!("{id}: frozen upstream {}", x.frontier.upstream_replay)
        });
        v.check(x.frontier.preserved_instances >= 1, || {
            format!("{id}: frozen preserved 0")
        });
        let e = paired(r, x, K::CompEntryOnly);
        let want = entry_flavor[&x.case];
        v.check(Some(e.status) == want && e.status != Status::Ok, || {
            format!("{id}: entry-only {} vs declared {want:?}", e.status)
        });
        let retry = paired(r, x, K::RetryOnly);
        v.check(retry.status == Status::Ok, || {
            format!("{id}: retry status {}", retry.status)
        });
        v.check(
            retry.frontier.upstream_replay as u64 == retry.completed_prefix_steps,
            || {
                format!(
                    "{id}: retry upstream {} vs prefix {}",
                    retry.frontier.upstream_replay, retry.completed_prefix_steps
                )
            },
        );
    }
    v.check(rows > 0, || "no commit-sensitive rows".into());
    for d in [Domain::Navigation, Domain::ScheduleForm, Domain::Diagnosis] {
        let n = runs(r, Regime::CommitSensitive, K::CompFrozen)
            .filter(|x| x.domain == d)
            .count();
        v.check(n > 0, || format!("{d}: no commit-sensitive case"));
    }
    v.detail = format!("{rows} repeat rows; entry-only 0.00, frozen 1.00, retry upstream = completed prefix");
    v
}

fn decisive(r: &Report) -> Verdict {
    let mut v = Verdict::new(2, "decisive frontier");
    let want = [(K::RetryOnly, (26, 21, 0)), (K::CompFrozen, (1, 0, 5))];
    let mut seen = 0;
    for x in r.runs.iter().filter(|x| x.case == DECISIVE) {
        let Some((_, (rp, up, pr))) = want.iter().find(|(k, _)| *k == x.controller) else {
            continue;
        };
        seen += 1;
        let f = x.frontier;
        let got = (f.replay, f.upstream_replay, f.preserved_instances);
        v.check(got == (*rp, *up, *pr), || {
            format!("{} r{}: {got:?}", x.controller, x.repeat)
        });
        v.check(x.oracle_replay == f.replay as u64, || {
            format!("{}: oracle {} vs {}", x.controller, x.oracle_replay, f.replay)
        });
    }
    v.check(seen == 2 * r.repeat as usize, || format!("saw {seen} decisive runs"));
    v.detail = "retry 26/21/0, frozen 1/0/5, oracle agrees".into();
    v
}

fn official_parity(r: &Report) -> Verdict {
    let mut v = Verdict::new(3, "official parity");
    let mut rows = 0;
    for x in runs(r, Regime::Official, K::CompFrozen) {
        rows += 1;
        let e = paired(r, x, K::CompEntryOnly);
        let id = format!("{} r{}", x.case, x.repeat);
        v.check(
            x.frontier.replay == e.frontier.replay && x.frontier.upstream_replay == e.frontier.upstream_replay,
            || format!("{id}: frozen {:?} vs entry {:?}", x.frontier, e.frontier),
        );
        v.check(
            x.frontier.upstream_replay == 0 && e.frontier.upstream_replay == 0,
            || format!("{id}: nonzero upstream"),
        );
    }
    v.check(rows > 0, || "no official rows".into());
    v.detail = format!("{rows} repeat rows; frozen = entry-only, upstream 0");
    v
}

fn random_veto(rng: &mut ChaCha8Rng, seq: u64) -> VetoResult {
    VetoResult {
        checkpoint: format!("c@{seq}"),
        lifecycle: [L::Entry, L::Commit, L::Exit][rng.gen_range(0..3)],
        seq,
        stable: rng.gen_bool(0.8),
        scope_ok: rng.gen_bool(0.8),
        no_committed_conflict: rng.gen_bool(0.7),
        effect_allowed: rng.gen_bool(0.7),
        consumers: Vec::new(),
    }
}

fn latest_admissible(evaluated: &[VetoResult]) -> Option<&VetoResult> {
    evaluated
        .iter()
        .filter(|v| v.stable && v.scope_ok && v.no_committed_conflict && v.effect_allowed)
        .max_by_key(|v| v.seq)
}

fn selection(cfg: &RunConfig) -> Verdict {
    let mut v = Verdict::new(4, "latest admissible selection");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..RANDOM_INSTANCES {
        let n = rng.gen_range(0..10);
        let mut seq = 0;
        let evaluated: Vec<VetoResult> = (0..n)
            .map(|_| {
                seq += rng.gen_range(1..4);
                random_veto(&mut rng, seq)
            })
            .collect();
        let want = latest_admissible(&evaluated);
        match (decide(&evaluated), want) {
            (Outcome::Eligible { checkpoint }, Some(w)) => {
                v.check(checkpoint == w.checkpoint, || {
                    format!("instance {i}: {checkpoint} vs {}", w.checkpoint)
                });
                let later_ok = evaluated.iter().filter(|e| e.seq > w.seq).all(|e| !e.admissible());
                v.check(later_ok, || format!("instance {i}: later checkpoint admissible"));
            }
            (Outcome::Blocked { .. }, None) => {}
            (got, want) => v
                .failures
                .push(format!("instance {i}: {got:?} vs {:?}", want.map(|w| &w.checkpoint))),
        }
    }

    // Every step of every case as a failure point, against the real sidecar.
    let mut real = 0;
    for case in domains::universe() {
        for seq in 0..case.scenario.script.len() as u64 {
            let mut site = case.site.clone();
            site.seq = seq;
            site.action = case.scenario.script[seq as usize].action.clone();
            let failed = run_to_failure(&case, &site, cfg.mode).expect("prefix replays");
            let sidecar = &failed.runtime.sidecar;
            for options in [
                GateOptions::default(),
                GateOptions {
                    allow_exit_restore: true,
                    ..GateOptions::default()
                },
            ] {
                let decision = select_rollback(&failed.failure, &failed.entity, sidecar, options);
                let Some(instance) = &decision.instance else { continue };
                real += 1;
                let brute: Vec<VetoResult> = sidecar
                    .checkpoints_of(instance)
                    .into_iter()
                    .map(|c| evaluate_checkpoint(&failed.failure, instance, c, sidecar, options))
                    .collect();
                let want = latest_admissible(&brute).map(|w| w.checkpoint.as_str());
                v.check(decision.eligible() == want, || {
                    format!("{} @{seq}: {:?} vs {want:?}", case.id, decision.eligible())
                });
            }
        }
    }
    v.detail = format!("{RANDOM_INSTANCES} random veto sets + {real} real failure points, 0 mismatches required");
    v
}

fn guard_off(r: &Report) -> Verdict {
    let mut v = Verdict::new(5, "guard-off ablation");
    let want = [
        (Domain::Navigation, 1),
        (Domain::ScheduleForm, 2),
        (Domain::Diagnosis, 1),
    ];
    for (d, n) in want {
        let row = r.guard_off.iter().find(|g| g.domain == d);
        v.check(row.is_some(), || format!("{d}: no witness"));
        let Some(g) = row else { continue };
        v.check(g.dropped.len() == n, || {
            format!("{d}: dropped {} (want {n})", g.dropped.len())
        });
        v.check(!g.guard_off_safe_equivalent, || {
            format!("{d}: guard-off run audited safe")
        });
        v.check(
            g.guard_on_status == Status::Blocked && g.guard_on_reason == Some(BlockedReason::CommittedConsumersPresent),
            || format!("{d}: guard on gave {} {:?}", g.guard_on_status, g.guard_on_reason),
        );
    }
    for g in &r.guard_off {
        v.check(g.dropped.len() == g.expected_dropped, || {
            format!("{}: dropped {}", g.case, g.dropped.len())
        });
    }
    let counts: Vec<String> = r
        .guard_off
        .iter()
        .map(|g| format!("{}={}", g.domain, g.dropped.len()))
        .collect();
    v.detail = format!(
        "dropped {}; guard on blocks committed_consumers_present",
        counts.join(" ")
    );
    v
}

fn wrong_boundary(r: &Report) -> Verdict {
    let mut v = Verdict::new(6, "wrong-boundary ablation");
    for b in &r.wrong_boundary {
        if b.reviewed {
            v.check(b.certified && b.restore_safe, || {
                format!("{}: reviewed edge not certified/safe", b.edge)
            });
        } else {
            v.check(!b.closed && !b.certified, || {
                format!("{}: unreviewed edge closed", b.edge)
            });
            v.check(!b.restore_safe, || {
                format!("{}: restore through unreviewed edge audited safe", b.edge)
            });
        }
    }
    for edge in [
        "WAITING_POI_SELECTION->STOP_READY",
        "WAITING_SLOT_SELECTION->SLOT_READY",
    ] {
        v.check(r.wrong_boundary.iter().any(|b| !b.reviewed && b.edge == edge), || {
            format!("{edge}: missing")
        });
    }
    let reviewed = r.wrong_boundary.iter().filter(|b| b.reviewed).count();
    v.check(reviewed == 2, || format!("{reviewed} reviewed edges"));
    v.detail = "unreviewed edges closed=false and unsafe; reviewed exits certify and pass".into();
    v
}

fn calibration(r: &Report) -> Verdict {
    let mut v = Verdict::new(7, "calibration safety");
    let c = &r.calibration;
    v.check(c.unsafe_admissions == 0, || {
        format!("{} unsafe admissions", c.unsafe_admissions)
    });
    v.check(c.false_blocked == 0, || format!("{} false blocks", c.false_blocked));
    v.check(c.dependency_blocked > 0, || "no dependency-blocked events".into());
    v.check(c.effect_blocked > 0, || "no effect-blocked events".into());
    v.check(c.admitted + c.blocked == c.evaluated_events, || {
        "admitted + blocked != evaluated".into()
    });
    v.detail = format!(
        "{} events: {} admitted, {} blocked ({} dependency / {} effect); 0/{} unsafe, 0/{} false-blocked",
        c.evaluated_events, c.admitted, c.blocked, c.dependency_blocked, c.effect_blocked, c.admitted, c.blocked
    );
    v
}

fn semantic(r: &Report) -> Verdict {
    let mut v = Verdict::new(8, "semantic audit");
    for d in Domain::ALL {
        let row = r.semantic.get(d.as_str());
        v.check(row.is_some_and(|s| s.comparable > 0), || {
            format!("{d}: no comparable rows")
        });
    }
    for (k, s) in &r.semantic {
        v.check(s.safe_equivalent == s.comparable, || {
            format!("{k}: {}/{} safe", s.safe_equivalent, s.comparable)
        });
    }
    let o = r.semantic.get("overall").cloned().unwrap_or_default();
    v.detail = format!(
        "{}/{} comparable rows safe-equivalent ({} rows)",
        o.safe_equivalent, o.comparable, o.rows
    );
    v
}

fn localization(r: &Report) -> Verdict {
    let mut v = Verdict::new(9, "localization");
    let a = &r.alignment;
    v.check(a.rows == r.denominators.repeat_rows && a.rows > 0, || {
        format!("{} alignment rows", a.rows)
    });
    v.check(a.full_key_exact == a.rows, || {
        format!("full-key {}/{}", a.full_key_exact, a.rows)
    });
    v.check(a.scope_match == a.rows, || {
        format!("scope {}/{}", a.scope_match, a.rows)
    });
    let re = &r.ambiguity.reentry;
    v.check(!re.is_empty(), || "no re-entry cases".into());
    for row in re {
        v.check(row.drop_ordinal_candidates >= 2 && row.abstained, || {
            format!(
                "{}: {} candidates, abstained {}",
                row.case, row.drop_ordinal_candidates, row.abstained
            )
        });
    }
    let probe = r.probes.iter().find(|p| p.domain == Domain::ScheduleForm);
    v.check(probe.is_some_and(|p| p.stale_erases_refined), || {
        "schedule probe does not erase".into()
    });
    v.detail = format!(
        "full-key {}/{}; {} re-entry cases abstain under drop-ordinal; schedule probe erases refined value",
        a.full_key_exact,
        a.rows,
        re.len()
    );
    v
}

fn depth() -> Verdict {
    let mut v = Verdict::new(10, "snapshot depth");
    match depth_benchmark(DEPTH) {
        Ok(d) => {
            v.check(d.inline_registry_payload_ratio >= MIN_PAYLOAD_RATIO, || {
                format!("payload ratio {:.2}", d.inline_registry_payload_ratio)
            });
            v.check(d.registry_growth < d.inline_growth, || {
                format!("growth {:.2} vs {:.2}", d.registry_growth, d.inline_growth)
            });
            v.check(d.registry_inline_restore_ratio <= MAX_RESTORE_RATIO, || {
                format!("restore ratio {:.2}", d.registry_inline_restore_ratio)
            });
            v.detail = format!(
                "depth {DEPTH}: payload {:.2}x (>= {MIN_PAYLOAD_RATIO}), growth {:.2}x < {:.2}x, restore {:.2}x (<= {MAX_RESTORE_RATIO})",
                d.inline_registry_payload_ratio, d.registry_growth, d.inline_growth, d.registry_inline_restore_ratio
            );
        }
        Err(e) => v.failures.push(e.to_string()),
    }
    v
}

fn determinism(first: &Report, cfg: &RunConfig) -> Verdict {
    let mut v = Verdict::new(11, "report determinism");
    let a = first.to_json();
    let b = build_report(ReportInputs::universe(), cfg)
        .expect("second report")
        .to_json();
    v.check(a == b, || "JSON reports differ".into());
    v.check(
        first.to_markdown() == build_report(ReportInputs::universe(), cfg).unwrap().to_markdown(),
        || "markdown reports differ".into(),
    );
    v.detail = format!("{} bytes, identical across runs with seed {}", a.len(), cfg.seed);
    v
}

#[test]
fn acceptance() {
    let cfg = RunConfig::default();
    let report = build_report(ReportInputs::universe(), &cfg).expect("report builds");
    let verdicts = [
        commit_sensitive(&report),
        decisive(&report),
        official_parity(&report),
        selection(&cfg),
        guard_off(&report),
        wrong_boundary(&report),
        calibration(&report),
        semantic(&report),
        localization(&report),
        depth(),
        determinism(&report, &cfg),
    ];
    // Written to the raw handle so the lines show without --nocapture.
    let mut err = std::io::stderr().lock();
    for v in &verdicts {
        let _ = writeln!(err, "{}", v.line());
    }
    let failed: Vec<u8> = verdicts
        .iter()
        .filter(|v| !v.failures.is_empty())
        .map(|v| v.id)
        .collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
