//! `evbattery` command-line runner: generate, detect, capacity, report.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use evbattery::capacity::{evaluate_capacity, write_predictions_csv, CapacityDataset, RegressorKind};
use evbattery::data::{dataset_stats, read_dataset, write_dataset, Vehicle};
use evbattery::evalkit::{run_detection, AveragedRoc, RocPoint};
use evbattery::synthgen::{anonymize, generate_fleet_with, AnonymizeConfig};

use config::{DetectorKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "evbattery", version, about = "Battery charging-snippet anomaly detection and capacity estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a labeled fleet and write it as a dataset.
    Generate(Common),
    /// Cross-validated vehicle-level anomaly detection.
    Detect(Common),
    /// Cross-validated capacity regression.
    Capacity(Common),
    /// Merge finished runs into one comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    detector: Option<DetectorKind>,
    #[arg(long)]
    regressor: Option<RegressorKind>,
    #[arg(long, action = clap::ArgAction::Set)]
    anonymize: Option<bool>,
    #[arg(long)]
    folds: Option<usize>,
    /// Dataset directory; when absent a fleet is generated from the config.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directories holding report.json or capacity_report.json.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Where to write report_table.csv and report_table.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

impl Failure {
    fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&resolve(&args)?),
        Command::Detect(args) => cmd_detect(&resolve(&args)?),
        Command::Capacity(args) => cmd_capacity(&resolve(&args)?),
        Command::Report(args) => {
            let out = args.out.unwrap_or_else(|| PathBuf::from("."));
            report::cmd_report(&args.runs, &out).map_err(Failure::from)
        }
    }
}

fn resolve(args: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).map_err(Failure::usage)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(config::Overrides {
        seed: args.seed,
        out: args.out.clone(),
        detector: args.detector,
        regressor: args.regressor,
        anonymize: args.anonymize,
        folds: args.folds,
        data: args.data.clone(),
    });
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

fn prepare_out(cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    cfg.save(&cfg.out.join(config::RESOLVED_CONFIG))
}

/// Vehicles from `--data`, or a freshly generated fleet.
fn load_vehicles(cfg: &RunConfig) -> anyhow::Result<Vec<Vehicle>> {
    match &cfg.data {
        Some(dir) => {
            let vehicles = read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
            Ok(if cfg.generate.anonymize {
                anonymize(
                    &vehicles,
                    &AnonymizeConfig {
                        seed: cfg.seed,
                        amplitude_fraction: cfg.generate.anonymize_amplitude,
                        ..AnonymizeConfig::default()
                    },
                )
            } else {
                vehicles
            })
        }
        None => Ok(generate_fleet_with(&cfg.generate, cfg.execution())?.vehicles),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_generate(cfg: &RunConfig) -> Result<(), Failure> {
    prepare_out(cfg)?;
    let fleet = generate_fleet_with(&cfg.generate, cfg.execution())?;
    write_dataset(&cfg.out, &fleet.vehicles)?;
    let stats = dataset_stats(&fleet.vehicles);
    write_json(&cfg.out.join("stats.json"), &stats)?;
    println!(
        "vehicles {} (anomalous {}), snippets {}, capacity labels {}",
        stats.vehicles, stats.anomalous_vehicles, stats.snippets, stats.capacity_labels
    );
    Ok(())
}

fn write_roc(path: &Path, curve: &[RocPoint]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

fn write_average_roc(path: &Path, roc: &AveragedRoc) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fpr", "tpr_mean", "tpr_std"])?;
    for i in 0..roc.fpr.len() {
        w.write_record([roc.fpr[i], roc.tpr_mean[i], roc.tpr_std[i]].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_detect(cfg: &RunConfig) -> Result<(), Failure> {
    prepare_out(cfg)?;
    let vehicles = load_vehicles(cfg)?;
    let settings = cfg.detection_settings();
    let run = run_detection(&vehicles, &cfg.detector, &settings)?;
    write_json(&cfg.out.join("report.json"), &run.report)?;
    write_json(&cfg.out.join("folds.json"), &run.plan)?;
    for r in &run.rounds {
        write_roc(&cfg.out.join(format!("roc_round_{}.csv", r.report.round)), &r.roc)?;
    }
    write_average_roc(&cfg.out.join("roc_average.csv"), &run.average_roc)?;
    let scores: Vec<_> = run.rounds.iter().flat_map(|r| r.test_scores.iter().cloned()).collect();
    evbattery::detectors::write_scores_csv(&cfg.out.join("scores.csv"), &scores)?;
    println!("{} AUROC {} (%, mean±std over {} rounds)", run.report.algorithm, run.report.summary, run.report.folds);
    Ok(())
}

fn cmd_capacity(cfg: &RunConfig) -> Result<(), Failure> {
    prepare_out(cfg)?;
    let vehicles = load_vehicles(cfg)?;
    let dataset = CapacityDataset::from_vehicles(&vehicles);
    if dataset.n_labeled() == 0 {
        return Err(Failure::Run(anyhow::anyhow!("dataset has no capacity-labeled snippets")));
    }
    let run = evaluate_capacity(&dataset, &cfg.regressor, &cfg.capacity_settings())?;
    write_json(&cfg.out.join("capacity_report.json"), &run.report)?;
    write_predictions_csv(&cfg.out.join("predictions.csv"), &run.predictions)?;
    println!(
        "{} RMSE {} A·h (mean-predictor baseline {:.2})",
        run.report.regressor, run.report.summary, run.report.baseline_rmse_mean
    );
    Ok(())
}
