//! Benchmark harness: universe runs, metrics, audits and micro-benchmarks.

pub mod ablation;
pub mod audit;
pub mod calibration;
pub mod depth;
pub mod localization;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod runner;
