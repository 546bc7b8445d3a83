use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use semrec::domains::{self, schedule};
use semrec::gate::select_rollback;
use semrec::{golden_run, recover, run_to_failure, Case, ControllerKind, Domain, GateOptions, SnapshotMode};

fn decisive() -> Case {
    domains::build_case(Domain::ScheduleForm, "schedule_form-cs-01").expect("decisive case")
}

fn selection(c: &mut Criterion) {
    let case = decisive();
    let failed = run_to_failure(&case, &case.site, SnapshotMode::RegistryOnly).unwrap();
    let options = GateOptions::default();
    c.bench_function("select_rollback/decisive", |b| {
        b.iter(|| select_rollback(&failed.failure, &failed.entity, &failed.runtime.sidecar, options))
    });
}

fn restore(c: &mut Criterion) {
    let mut group = c.benchmark_group("restore_entry/depth5");
    let case = schedule::depth_case(5);
    for mode in SnapshotMode::ALL {
        let failed = run_to_failure(&case, &case.site, mode).unwrap();
        let id = failed.failed_instance().unwrap().clone();
        let entry = failed.runtime.sidecar.checkpoints_of(&id)[0].id.clone();
        group.bench_with_input(BenchmarkId::from_parameter(mode.as_str()), &failed, |b, failed| {
            b.iter_batched(
                || failed.runtime.clone(),
                |mut rt| rt.restore_checkpoint(&entry).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn full_recovery(c: &mut Criterion) {
    let mut group = c.benchmark_group("recover/decisive");
    let case = decisive();
    let failed = run_to_failure(&case, &case.site, SnapshotMode::RegistryOnly).unwrap();
    for kind in ControllerKind::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(kind.as_str()), kind, |b, kind| {
            b.iter(|| recover(*kind, &case, &failed, GateOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn golden(c: &mut Criterion) {
    let case = decisive();
    c.bench_function("golden_run/decisive", |b| {
        b.iter(|| golden_run(&case, SnapshotMode::RegistryOnly).unwrap())
    });
}

criterion_group!(benches, selection, restore, full_recovery, golden);
criterion_main!(benches);
