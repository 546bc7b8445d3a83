//! Registry-only and inline snapshot modes must be observationally equal.

use semrec::controllers::Runtime;
use semrec::harness::runner::{prepare, run_universe};
use semrec::{domains, golden_run, ControllerKind, RunConfig, SnapshotMode};

#[test]
fn checkpoint_memory_agrees_across_modes() {
    for case in domains::universe() {
        let reg = golden_run(&case, SnapshotMode::RegistryOnly).unwrap();
        let inl = golden_run(&case, SnapshotMode::Inline).unwrap();
        let ids: Vec<_> = reg.sidecar.checkpoints().iter().map(|c| c.id.clone()).collect();
        let inline_ids: Vec<_> = inl.sidecar.checkpoints().iter().map(|c| c.id.clone()).collect();
        assert_eq!(ids, inline_ids, "{}", case.id);
        for id in &ids {
            let (a, _) = reg.sidecar.checkpoint_memory(&reg.agent, id).unwrap();
            let (b, _) = inl.sidecar.checkpoint_memory(&inl.agent, id).unwrap();
            assert_eq!(a, b, "{} {id}", case.id);
        }
    }
}

#[test]
fn restore_lands_on_the_same_state() {
    for case in domains::universe() {
        let mut states = Vec::new();
        for mode in SnapshotMode::ALL {
            let golden = golden_run(&case, mode).unwrap();
            let ids: Vec<_> = golden.sidecar.checkpoints().iter().map(|c| c.id.clone()).collect();
            let mut landed = Vec::new();
            for id in ids {
                let mut rt: Runtime = golden.clone();
                let (seq, _) = rt.restore_checkpoint(&id).unwrap();
                landed.push((seq, rt.agent.current_state().to_string(), rt.agent.memory().clone()));
            }
            states.push(landed);
        }
        assert_eq!(states[0], states[1], "{}", case.id);
    }
}

#[test]
fn run_records_differ_only_in_restore_cost() {
    let cfg = RunConfig::default();
    let mut per_mode = Vec::new();
    for mode in SnapshotMode::ALL {
        let cfg = RunConfig { mode, ..cfg };
        let prepared = prepare(domains::universe(), mode).unwrap();
        let mut rows = run_universe(&prepared, ControllerKind::ALL, &cfg).unwrap();
        for r in &mut rows {
            r.restore_cost = 0;
        }
        per_mode.push(rows);
    }
    assert_eq!(per_mode[0], per_mode[1]);
}
