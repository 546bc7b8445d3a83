//! Executable benchmark cases: a scenario bound to its frozen configs,
//! failure site, goal contract and audit profile.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contracts::{ConfigSet, Predicate};
use crate::engine::{Key, Memory, StateId, Value};
use crate::scenario::{FailureSite, Scenario};
use crate::sidecar::{InstanceId, Lifecycle};

macro_rules! token_enum {
    ($name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $token)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($token => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{}`", stringify!($name), other)),
                }
            }
        }
    };
}

token_enum!(Domain {
    Navigation => "navigation",
    ScheduleForm => "schedule_form",
    Diagnosis => "diagnosis",
    EtlPipeline => "etl_pipeline",
    TravelPlanning => "travel_planning",
});

token_enum!(Regime {
    Official => "official",
    CommitSensitive => "commit_sensitive",
});

token_enum!(Status {
    Ok => "ok",
    Contract => "contract",
    NoRecov => "no_recov",
    Blocked => "blocked",
});

token_enum!(ControllerKind {
    RetryOnly => "retry_only",
    CoarseStateRetry => "coarse_state_retry",
    CompEntryOnly => "comp_entry_only",
    CompFrozen => "comp_frozen",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditProfile {
    pub semantic: bool,
    pub prefix: bool,
    pub effect: bool,
    pub committed_prefix: bool,
}

impl AuditProfile {
    pub fn for_domain(domain: Domain) -> Self {
        let (effect, committed_prefix) = match domain {
            Domain::Navigation | Domain::ScheduleForm => (false, false),
            Domain::Diagnosis => (true, false),
            Domain::EtlPipeline | Domain::TravelPlanning => (true, true),
        };
        Self {
            semantic: true,
            prefix: true,
            effect,
            committed_prefix,
        }
    }
}

/// Frozen expectation for where CompFrozen restores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedScope {
    pub instance: InstanceId,
    /// `None` when the gate is expected to block.
    pub checkpoint: Option<Lifecycle>,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub id: String,
    pub domain: Domain,
    pub regime: Regime,
    pub scenario: Scenario,
    pub configs: Arc<ConfigSet>,
    pub site: FailureSite,
    /// Extra failure sites probed only by the calibration audit.
    pub extra_sites: Vec<FailureSite>,
    pub coarse_anchor: StateId,
    pub fallback_allowed: bool,
    /// Declared CompEntryOnly status for commit-sensitive cases.
    pub entry_flavor: Option<Status>,
    pub goal: Predicate,
    pub golden_keys: BTreeSet<Key>,
    pub expected: ExpectedScope,
}

impl Case {
    pub fn failed_entity(&self, site: &FailureSite) -> &str {
        &self.scenario.script[site.seq as usize].entity
    }

    pub fn audit_profile(&self) -> AuditProfile {
        AuditProfile::for_domain(self.domain)
    }

    /// Domain goal plus presence of every golden key.
    pub fn goal_holds(&self, state: &str, memory: &Memory) -> bool {
        self.goal.evaluate(state, memory, "") && self.golden_keys.iter().all(|k| memory.contains_key(k))
    }

    /// Golden projection of a terminal memory.
    pub fn project(&self, memory: &Memory) -> BTreeMap<Key, Option<Value>> {
        self.golden_keys
            .iter()
            .map(|k| (k.clone(), memory.get(k).cloned()))
            .collect()
    }
}

/// A committed-consumer witness used by the guard-off ablation.
#[derive(Debug, Clone)]
pub struct WitnessCase {
    pub case: Case,
    pub expected_dropped: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_round_trip() {
        for d in Domain::ALL {
            assert_eq!(d.as_str().parse::<Domain>().unwrap(), *d);
        }
        assert_eq!(serde_json::to_string(&Status::NoRecov).unwrap(), "\"no_recov\"");
        assert!("bogus".parse::<Regime>().is_err());
    }
}
