//! Localization audit: observed scope alignment, weakened-key ambiguity and
//! consequence probes.

use serde::{Deserialize, Serialize};

use crate::case::{Case, ControllerKind, Domain};
use crate::controllers::{run_to_failure, RunError};
use crate::domains;
use crate::sidecar::{InstanceId, InstanceKey, Lifecycle, SnapshotMode};

use super::runner::{Prepared, RunRecord};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub rows: usize,
    pub full_key_exact: usize,
    pub scope_match: usize,
    pub checkpoint_match: usize,
}

/// Compare CompFrozen rows against each case's frozen expectation.
pub fn alignment(records: &[RunRecord], cases: &[&Case]) -> Alignment {
    let mut a = Alignment::default();
    for r in records.iter().filter(|r| r.controller == ControllerKind::CompFrozen) {
        let Some(case) = cases.iter().find(|c| c.id == r.case) else {
            continue;
        };
        a.rows += 1;
        let expected = &case.expected;
        a.full_key_exact += usize::from(r.failed_instance.as_ref() == Some(&expected.instance));
        let scope = match expected.checkpoint {
            Some(_) => r.restored_instance.as_ref() == Some(&expected.instance),
            None => r.restored_instance.is_none(),
        };
        a.scope_match += usize::from(scope);
        a.checkpoint_match += usize::from(r.restored_lifecycle == expected.checkpoint);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReentryRow {
    pub case: String,
    pub failed_instance: InstanceId,
    pub drop_ordinal_candidates: usize,
    pub abstained: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub cases: usize,
    pub candidates: usize,
    pub full_key_exact: usize,
    pub drop_ordinal_ambiguous: usize,
    pub drop_entity_ambiguous: usize,
    /// Distinct (skeleton, entity) pairs carrying more than one ordinal.
    pub reentry_aliases: usize,
    pub reentry: Vec<ReentryRow>,
}

/// Enumerate every instance of every golden run under full and weakened keys.
pub fn weakened_keys(prepared: &[Prepared], mode: SnapshotMode) -> Result<Ambiguity, RunError> {
    let mut a = Ambiguity::default();
    for p in prepared {
        a.cases += 1;
        let sidecar = &p.golden.runtime.sidecar;
        for inst in sidecar.instances() {
            let id = &inst.id;
            a.candidates += 1;
            a.full_key_exact += usize::from(sidecar.resolve_key(&InstanceKey::Full(id.clone())).len() == 1);
            a.drop_ordinal_ambiguous += usize::from(sidecar.resolve_key(&InstanceKey::drop_ordinal(id)).len() > 1);
            a.drop_entity_ambiguous += usize::from(sidecar.resolve_key(&InstanceKey::drop_entity(id)).len() > 1);
            a.reentry_aliases += usize::from(id.ordinal == 1);
        }
        let failed = run_to_failure(&p.case, &p.case.site, mode)?;
        if let Some(id) = failed.failed_instance().filter(|id| id.ordinal > 0) {
            let n = failed.runtime.sidecar.resolve_key(&InstanceKey::drop_ordinal(id)).len();
            a.reentry.push(ReentryRow {
                case: p.case.id.clone(),
                failed_instance: id.clone(),
                drop_ordinal_candidates: n,
                abstained: n != 1,
            });
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub domain: Domain,
    pub case: String,
    pub drop_ordinal_candidates: usize,
    pub abstained: bool,
    /// Restoring the stale candidate would overwrite the failed instance's
    /// committed value with an older one.
    pub stale_erases_refined: bool,
    pub detail: String,
}

fn probe(case: &Case, key_field: &str, mode: SnapshotMode) -> Result<ProbeRow, RunError> {
    let failed = run_to_failure(case, &case.site, mode)?;
    let rt = &failed.runtime;
    let id = failed.failed_instance().expect("probe localizes").clone();
    let candidates = rt.sidecar.resolve_key(&InstanceKey::drop_ordinal(&id));
    let key = format!("{}.{key_field}", id.entity);
    let current = rt.agent.memory().get(&key).cloned();
    let mut erases = false;
    let mut detail = format!("{key} = {current:?}");
    for stale in candidates.iter().filter(|c| **c != id) {
        let commit = rt
            .sidecar
            .checkpoints_of(stale)
            .into_iter()
            .find(|c| c.lifecycle == Lifecycle::Commit);
        if let Some(c) = commit {
            let (snapshot, _) = rt.sidecar.checkpoint_memory(&rt.agent, &c.id).map_err(RunError::from)?;
            let old = snapshot.entries.get(&key).cloned();
            erases |= old != current;
            detail = format!("{key}: {current:?} would become {old:?} via {stale}");
        }
    }
    Ok(ProbeRow {
        domain: case.domain,
        case: case.id.clone(),
        drop_ordinal_candidates: candidates.len(),
        abstained: candidates.len() != 1,
        stale_erases_refined: erases,
        detail,
    })
}

/// Navigation and diagnosis resolve uniquely; the schedule probe aliases.
pub fn consequence_probes(mode: SnapshotMode) -> Result<Vec<ProbeRow>, RunError> {
    let nav = domains::build_case(Domain::Navigation, "navigation-cs-01").expect("frozen case");
    let diag = domains::build_case(Domain::Diagnosis, "diagnosis-cs-04").expect("frozen case");
    Ok(vec![
        probe(&nav, "poi", mode)?,
        probe(&domains::schedule::consequence_probe(), "value", mode)?,
        probe(&diag, "hypothesis", mode)?,
    ])
}
