//! The `opdyn` command line: scenario analysis and simulation plus the
//! verification suites. Reports go to stdout as JSON and optionally to
//! `--report`; recorded states go to `--out` as CSV. Exit codes: 0 success,
//! 1 validation or usage error, 2 internal or numeric failure, 3 oracle
//! disagreement in `verify`.

use std::ffi::OsString;
use std::io::Write;
use std::ops::Range;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::report::{analyze_as, to_json_bytes, Analysis};
use crate::scenario::{atomic_write, load_scenario, trajectory_csv, Mode, Scenario};
use crate::verify::{run_suites, SuiteOutcome};

#[derive(Debug, Parser)]
#[command(
    name = "opdyn",
    version,
    about = "Opinion dynamics on influence networks: analysis, simulation, verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (JSON).
    scenario: PathBuf,
    /// Override the within-issue step tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the within-issue iteration budget.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Override the issue budget.
    #[arg(long)]
    max_issues: Option<usize>,
    /// Write recorded states as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the analysis report as JSON here (also printed to stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record every state instead of first and last.
    #[arg(long)]
    record_full: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every applicable check plus the scenario's own dynamics.
    Analyze(RunArgs),
    /// Run the within-issue dynamics once, whatever the scenario's mode.
    Simulate(RunArgs),
    /// Run the issue-sequence dynamics.
    Sequence(RunArgs),
    /// Run the issue-sequence dynamics with bounded-confidence coupling.
    Bounded(RunArgs),
    /// Run the randomized oracle suites.
    Verify {
        /// Comma-separated suite names; all suites when omitted.
        #[arg(long, value_delimiter = ',')]
        suites: Vec<String>,
        /// Seed range `A..B` (half-open) applied to every selected suite.
        #[arg(long)]
        seeds: Option<String>,
        /// Write the suite outcomes as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Analyze(args) => run_scenario(args, None),
        Command::Simulate(args) => run_scenario(args, Some(Mode::Single)),
        Command::Sequence(args) => run_scenario(args, Some(Mode::Sequence)),
        Command::Bounded(args) => run_scenario(args, Some(Mode::Bounded)),
        Command::Verify { suites, seeds, report } => run_verify(&suites, seeds.as_deref(), report),
    }
}

fn apply_overrides(scenario: &mut Scenario, args: &RunArgs) -> Result<()> {
    if let Some(tol) = args.tol {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::Validation {
                field: "--tol".into(),
                reason: format!("must be positive and finite, got {tol}"),
            });
        }
        scenario.tolerances.step_tol = tol;
    }
    if let Some(max_iter) = args.max_iter {
        if max_iter == 0 {
            return Err(Error::Validation {
                field: "--max-iter".into(),
                reason: "must be at least 1".into(),
            });
        }
        scenario.budgets.max_iter = max_iter;
    }
    if let Some(max_issues) = args.max_issues {
        if max_issues == 0 {
            return Err(Error::Validation {
                field: "--max-issues".into(),
                reason: "must be at least 1".into(),
            });
        }
        scenario.budgets.max_issues = max_issues;
    }
    scenario.record_full |= args.record_full;
    Ok(())
}

fn run_scenario(args: RunArgs, forced_mode: Option<Mode>) -> Result<i32> {
    let mut scenario = load_scenario(&args.scenario)?;
    apply_overrides(&mut scenario, &args)?;
    let mode = forced_mode.unwrap_or(scenario.mode);
    let Analysis { report, rows } = analyze_as(&scenario, mode)?;
    let bytes = to_json_bytes(&report);
    if let Some(path) = &args.report {
        atomic_write(path, &bytes)?;
    }
    std::io::stdout().write_all(&bytes)?;
    if let Some(path) = &args.out {
        atomic_write(path, trajectory_csv(&rows, scenario.network.n()).as_bytes())?;
    }
    Ok(0)
}

/// Parses `A..B` as a half-open seed range.
fn parse_seed_range(text: &str) -> Result<Range<u64>> {
    let invalid = || Error::Validation {
        field: "--seeds".into(),
        reason: format!("expected A..B with A <= B, got \"{text}\""),
    };
    let (a, b) = text.split_once("..").ok_or_else(invalid)?;
    let start: u64 = a.trim().parse().map_err(|_| invalid())?;
    let end: u64 = b.trim().parse().map_err(|_| invalid())?;
    if start > end {
        return Err(invalid());
    }
    Ok(start..end)
}

fn run_verify(suites: &[String], seeds: Option<&str>, report: Option<PathBuf>) -> Result<i32> {
    let range = seeds.map(parse_seed_range).transpose()?;
    let outcomes = run_suites(suites, range)?;
    let mut stdout = std::io::stdout().lock();
    for outcome in &outcomes {
        writeln!(stdout, "{}", suite_line(outcome))?;
    }
    let failed = outcomes.iter().any(|o| !o.ok());
    writeln!(
        stdout,
        "verify: {}/{} suites ok",
        outcomes.iter().filter(|o| o.ok()).count(),
        outcomes.len()
    )?;
    if let Some(path) = &report {
        atomic_write(path, &to_json_bytes(&outcomes))?;
    }
    Ok(if failed { 3 } else { 0 })
}

fn suite_line(outcome: &SuiteOutcome) -> String {
    if outcome.ok() {
        format!("suite {}: {} cases, 0 disagreements ... ok", outcome.name, outcome.cases)
    } else {
        let shown: Vec<String> = outcome
            .disagreements
            .iter()
            .take(10)
            .map(|s| s.to_string())
            .collect();
        let suffix = if outcome.disagreements.len() > 10 { ", ..." } else { "" };
        format!(
            "suite {}: {} cases, {} disagreements (seeds {}{}) ... FAIL",
            outcome.name,
            outcome.cases,
            outcome.disagreements.len(),
            shown.join(", "),
            suffix
        )
    }
}
