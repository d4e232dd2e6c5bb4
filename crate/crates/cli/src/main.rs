//! `dnls`: command-line front end of the laboratory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dnls_core::lab::criteria::{evaluate, CRITERIA};
use dnls_core::lab::{run, ExperimentConfig, ExperimentKind, ExperimentReport, MEASURED_NOTE};

#[derive(Parser)]
#[command(name = "dnls", version, about = "Traveling waves of the derivative NLS: audits and stability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectra of the linearized operators and det d'' over the audit set.
    AuditSpectral(RunArgs),
    /// Perturbed single-wave run with orbit distance and parameter drift.
    StabilitySingle(RunArgs),
    /// Perturbed two-wave run with family distance, drifts and monotonicity.
    StabilityPair(RunArgs),
    /// Localized monotone functionals along a two-wave run.
    Monotone(RunArgs),
    /// Mass, momentum, energy, action, Nehari value and d'' over the audit set.
    SolitonTable(RunArgs),
    /// Evaluates acceptance criteria; exit code 0 only if all selected criteria pass.
    Acceptance(AcceptanceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat JSON config; its keys override the subcommand's preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the random-smooth perturbation.
    #[arg(long)]
    seed: Option<u64>,
    /// Run pair configurations that fail the speed conditions.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct AcceptanceArgs {
    /// Criteria to evaluate (1-12); all when omitted.
    #[arg(long = "criterion", value_parser = clap::value_parser!(u8).range(1..=12))]
    criteria: Vec<u8>,
    /// Print every check, not only the summary line.
    #[arg(long)]
    verbose: bool,
}

fn config(kind: ExperimentKind, args: &RunArgs) -> dnls_core::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(kind, path)?,
        None => ExperimentConfig::preset(kind),
    };
    cfg.kind = kind;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.force |= args.force;
    Ok(cfg)
}

fn print_report(report: &ExperimentReport) {
    for (k, v) in &report.summary {
        println!("{k} = {v:e}");
    }
    for (k, v) in &report.measured_constants {
        println!("{k} = {v:e} ({MEASURED_NOTE})");
    }
    for (k, pass) in &report.pass_fail {
        println!("[{}] {k}", if *pass { "PASS" } else { "FAIL" });
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
}

fn experiment(kind: ExperimentKind, args: &RunArgs) -> ExitCode {
    let outcome = config(kind, args).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(report) => {
            print_report(&report);
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn acceptance(args: &AcceptanceArgs) -> ExitCode {
    let ids: Vec<usize> =
        if args.criteria.is_empty() { (1..=CRITERIA.len()).collect() } else { args.criteria.iter().map(|&i| i as usize).collect() };
    let mut all = true;
    for id in ids {
        let outcome = evaluate(id);
        println!("{}", outcome.line());
        if args.verbose || !outcome.pass() {
            for line in outcome.details() {
                println!("{line}");
            }
        }
        all &= outcome.pass();
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::AuditSpectral(a) => experiment(ExperimentKind::SpectralAudit, &a),
        Command::StabilitySingle(a) => experiment(ExperimentKind::Single, &a),
        Command::StabilityPair(a) => experiment(ExperimentKind::Pair, &a),
        Command::Monotone(a) => experiment(ExperimentKind::Monotone, &a),
        Command::SolitonTable(a) => experiment(ExperimentKind::SolitonTable, &a),
        Command::Acceptance(a) => acceptance(&a),
    }
}
