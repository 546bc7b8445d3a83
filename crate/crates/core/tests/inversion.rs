//! Inverting a delta suffix reproduces the memory a forward run had at that point.

use std::sync::OnceLock;

use proptest::prelude::*;
use semrec::controllers::Runtime;
use semrec::{domains, golden_run, Case, SnapshotMode};

fn universe() -> &'static [(Case, Runtime)] {
    static U: OnceLock<Vec<(Case, Runtime)>> = OnceLock::new();
    U.get_or_init(|| {
        domains::universe()
            .into_iter()
            .map(|c| {
                let g = golden_run(&c, SnapshotMode::RegistryOnly).unwrap();
                (c, g)
            })
            .collect()
    })
}

fn forward(case: &Case, steps: usize) -> Runtime {
    let mut rt = Runtime::new(case, SnapshotMode::Inline).unwrap();
    for a in &case.scenario.script[..steps] {
        rt.step(a).unwrap();
    }
    rt
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn invert_matches_forward_prefix(pick in any::<prop::sample::Index>(), cut in any::<prop::sample::Index>()) {
        let (case, golden) = pick.get(universe());
        let k = cut.index(case.scenario.script.len() + 1);
        let inverted = golden.agent.invert_suffix(k as u64).unwrap();
        let fwd = forward(case, k);
        prop_assert_eq!(&inverted.entries, fwd.agent.memory());
        prop_assert_eq!(golden.state_at(k as u64), fwd.agent.current_state());
    }

    #[test]
    fn restore_then_replay_round_trips(pick in any::<prop::sample::Index>(), cut in any::<prop::sample::Index>()) {
        let (case, golden) = pick.get(universe());
        let k = cut.index(case.scenario.script.len() + 1);
        let mut agent = golden.agent.clone();
        let snap = agent.invert_suffix(k as u64).unwrap();
        agent.restore_to(&snap).unwrap();
        prop_assert_eq!(agent.next_seq(), k as u64);
        for a in &case.scenario.script[k..] {
            agent.execute_step(&a.action, a.to.as_deref(), &a.effect).unwrap();
        }
        prop_assert_eq!(agent.memory(), golden.agent.memory());
        prop_assert_eq!(agent.current_state(), golden.agent.current_state());
    }
}
