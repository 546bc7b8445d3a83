//! Semantic-recoverability recovery runtime.

pub mod case;
pub mod contracts;
pub mod controllers;
pub mod domains;
pub mod engine;
pub mod gate;
pub mod harness;
pub mod scenario;
pub mod sidecar;

#[cfg(test)]
mod testkit;

pub use case::{Case, ControllerKind, Domain, Regime, Status, WitnessCase};
pub use contracts::{load_configs, ConfigSet, EffectClass, Predicate, SkeletonConfig};
pub use controllers::{golden_run, recover, run_to_failure, FailedRun, RecoveryOutcome, RunError, Terminal};
pub use engine::{AgentModel, FailureEvent, FailureSignal, MemorySnapshot, Value};
pub use gate::{BlockedReason, GateOptions, Outcome, RecoveryDecision};
pub use harness::report::{build_report, Report, ReportInputs};
pub use harness::runner::{RunConfig, RunRecord};
pub use scenario::{FailureSite, Scenario};
pub use sidecar::{InstanceId, InstanceKey, Lifecycle, Sidecar, SnapshotMode};
