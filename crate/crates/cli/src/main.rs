//! Command-line harness for the recovery runtime.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use semrec::{ControllerKind, Domain, Regime, SnapshotMode};

#[derive(Debug, Parser)]
#[command(
    name = "semrec",
    version,
    about = "Run, audit and report on the recovery benchmark universe"
)]
pub struct Cli {
    /// Seed for the per-run failure signal draw.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "registry_only")]
    pub mode: SnapshotMode,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run cases under one or all controllers and print the metrics table.
    Run {
        #[arg(long)]
        domain: Option<Domain>,
        #[arg(long)]
        regime: Option<Regime>,
        #[arg(long)]
        controller: Option<ControllerKind>,
        #[arg(long, default_value_t = 5)]
        repeat: u32,
        /// Restrict to one case id.
        #[arg(long)]
        case: Option<String>,
        /// Print raw per-run records as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run one audit pipeline.
    Audit {
        #[arg(value_enum)]
        kind: AuditKind,
    },
    /// Run one ablation.
    Ablate {
        #[arg(value_enum)]
        kind: AblationKind,
    },
    /// Run a micro-benchmark.
    Bench {
        #[arg(value_enum)]
        kind: BenchKind,
        #[arg(long, default_value_t = 5)]
        max_depth: usize,
    },
    /// Build the full report and write report.json and report.md.
    Report {
        #[arg(long, env = "RECOVERY_REPORT_DIR", default_value = "report")]
        out: PathBuf,
    },
    /// Check a universe lock file against the built-in universe.
    VerifyUniverse {
        #[arg(long, default_value = "universe.lock")]
        lock: PathBuf,
    },
    /// Write the universe lock, per-case scenarios and per-domain configs.
    ExportCases {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AuditKind {
    Semantic,
    Calibration,
    Localization,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AblationKind {
    GuardOff,
    WrongBoundary,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BenchKind {
    Depth,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
