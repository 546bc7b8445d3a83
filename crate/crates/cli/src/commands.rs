use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use semrec::domains::{self, UniverseLock};
use semrec::harness::ablation::{guard_off, wrong_boundary};
use semrec::harness::calibration::{calibrate, summarize};
use semrec::harness::depth::depth_benchmark;
use semrec::harness::localization::{alignment, consequence_probes, weakened_keys};
use semrec::harness::report::{calibration_table, metrics_rows, metrics_table, semantic_summary, semantic_table};
use semrec::harness::runner::{prepare, run_universe};
use semrec::{build_report, Case, ControllerKind, Regime, ReportInputs, RunConfig};

use crate::{AblationKind, AuditKind, BenchKind, Cli, Command};

fn config(cli: &Cli) -> RunConfig {
    RunConfig {
        seed: cli.seed,
        mode: cli.mode,
        ..RunConfig::default()
    }
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let cfg = config(cli);
    match &cli.command {
        Command::Run {
            domain,
            regime,
            controller,
            repeat,
            case,
            json,
        } => {
            if *repeat == 0 {
                bail!("--repeat must be at least 1");
            }
            let cases: Vec<Case> = domains::universe()
                .into_iter()
                .filter(|c| domain.is_none_or(|d| c.domain == d))
                .filter(|c| regime.is_none_or(|r| c.regime == r))
                .filter(|c| case.as_deref().is_none_or(|id| c.id == id))
                .collect();
            if cases.is_empty() {
                bail!("no case matches the given filters");
            }
            let controllers: Vec<ControllerKind> = match controller {
                Some(k) => vec![*k],
                None => ControllerKind::ALL.to_vec(),
            };
            let cfg = RunConfig { repeat: *repeat, ..cfg };
            let records = run_universe(&prepare(cases, cfg.mode)?, &controllers, &cfg)?;
            if *json {
                print_json(&records)?;
            } else {
                for r in [Regime::CommitSensitive, Regime::Official] {
                    let rows = metrics_rows(&records, r);
                    if !rows.is_empty() {
                        println!("## {r}\n\n{}", metrics_table(&rows));
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { kind } => audit(*kind, &cfg),
        Command::Ablate { kind } => ablate(*kind, &cfg),
        Command::Bench {
            kind: BenchKind::Depth,
            max_depth,
        } => {
            let report = depth_benchmark(*max_depth)?;
            print_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { out } => {
            let report = build_report(ReportInputs::universe(), &cfg)?;
            let (json, md) = report.write(out)?;
            println!("wrote {} and {}", json.display(), md.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyUniverse { lock } => verify_universe(lock),
        Command::ExportCases { out } => {
            export_cases(out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn audit(kind: AuditKind, cfg: &RunConfig) -> Result<ExitCode> {
    let prepared = prepare(domains::universe(), cfg.mode)?;
    match kind {
        AuditKind::Semantic => {
            let records = run_universe(&prepared, &[ControllerKind::CompFrozen], cfg)?;
            let summary = semantic_summary(&records);
            print!("{}", semantic_table(&summary));
            Ok(verdict(summary.values().all(|r| r.safe_equivalent == r.comparable)))
        }
        AuditKind::Calibration => {
            let mut cases = domains::universe();
            cases.extend(domains::witnesses().into_iter().map(|w| w.case));
            let events = calibrate(&prepare(cases, cfg.mode)?, cfg)?;
            let (overall, by_domain) = summarize(&events);
            print!("{}", calibration_table(&overall, &by_domain));
            Ok(verdict(overall.unsafe_admissions == 0 && overall.false_blocked == 0))
        }
        AuditKind::Localization => {
            let records = run_universe(&prepared, ControllerKind::ALL, cfg)?;
            let cases: Vec<&Case> = prepared.iter().map(|p| &p.case).collect();
            let align = alignment(&records, &cases);
            let ambiguity = weakened_keys(&prepared, cfg.mode)?;
            let probes = consequence_probes(cfg.mode)?;
            let ok = align.full_key_exact == align.rows && ambiguity.reentry.iter().all(|r| r.abstained);
            print_json(&serde_json::json!({
                "alignment": align,
                "ambiguity": ambiguity,
                "probes": probes,
            }))?;
            Ok(verdict(ok))
        }
    }
}

fn ablate(kind: AblationKind, cfg: &RunConfig) -> Result<ExitCode> {
    match kind {
        AblationKind::GuardOff => {
            let rows = domains::witnesses()
                .iter()
                .map(|w| guard_off(w, cfg.mode))
                .collect::<Result<Vec<_>, _>>()?;
            print_json(&rows)?;
        }
        AblationKind::WrongBoundary => {
            let mut rows = Vec::new();
            for wb in domains::wrong_boundaries() {
                rows.extend(wrong_boundary(&wb, cfg.mode)?);
            }
            print_json(&rows)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn verify_universe(lock: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(lock).with_context(|| format!("reading {}", lock.display()))?;
    let stored: UniverseLock = serde_json::from_str(&text).with_context(|| format!("parsing {}", lock.display()))?;
    let current = UniverseLock::current();
    if stored == current {
        println!("universe ok: {} rows, hash {}", current.cases.len(), current.hash);
        return Ok(ExitCode::SUCCESS);
    }
    println!("universe mismatch: stored {} vs built-in {}", stored.hash, current.hash);
    for (a, b) in stored.cases.iter().zip(&current.cases) {
        if a != b {
            println!("  first differing row: {}/{} repeat {}", b.domain, b.case, b.repeat);
            break;
        }
    }
    if stored.cases.len() != current.cases.len() {
        println!("  row count {} vs {}", stored.cases.len(), current.cases.len());
    }
    Ok(ExitCode::FAILURE)
}

fn export_cases(out: &Path) -> Result<()> {
    let lock = UniverseLock::current();
    fs::create_dir_all(out)?;
    fs::write(out.join("universe.lock"), lock.to_json())?;
    let configs = out.join("configs");
    fs::create_dir_all(&configs)?;
    for d in semrec::Domain::ALL {
        let dir = out.join("cases").join(d.as_str());
        fs::create_dir_all(&dir)?;
        for case in domains::cases(*d) {
            fs::write(dir.join(format!("{}.json", case.id)), case.scenario.to_json())?;
        }
        fs::write(
            configs.join(format!("{d}.json")),
            domains::model(*d).config_document().to_json(),
        )?;
    }
    println!("exported {} cases to {}", lock.cases.len(), out.display());
    Ok(())
}
