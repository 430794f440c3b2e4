//! Command-line entry point: data-set generation, training, sweeps,
//! report regeneration and data-set inspection.
//!
//! Exit codes: 0 success, 1 usage error, 2 partial or full computation
//! failure, 3 data-format error.

use bnnvi::config::RunConfig;
use bnnvi::dataset::{self, Task, TestSet, TrainSet};
use bnnvi::error::Error;
use bnnvi::experiment::{
    regenerate_report, run_cell, sweep_numerosity, sweep_physics, SweepReport, TrainConfig,
};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bnnvi",
    version,
    about = "Variational Bayesian neural networks on occlusion, support and numerosity tasks"
)]
struct Cli {
    /// JSON config file; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (falls back to config, then $BNN_SEED, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate <task>_train.bnnds and <task>_test.bnnds
    Gen {
        task: Task,
        /// Output directory
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train and evaluate a single model (resumable run directory)
    Train {
        task: Task,
        /// Training-set size
        #[arg(long)]
        n: usize,
        /// Directory holding the .bnnds files
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run-directory root
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Run the full N-by-seed sweep and emit CSV reports
    Sweep {
        task: Task,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        runs: Option<PathBuf>,
        /// Parallel sweep cells (0 = all cores)
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute metrics and CSVs from stored checkpoints
    Report {
        task: Task,
        #[arg(long)]
        runs: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print a data-set file's header and label histogram as JSON
    Inspect { file: PathBuf },
}

fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> u64 {
    flag.or(cfg.seed)
        .or_else(|| {
            std::env::var("BNN_SEED")
                .ok()
                .and_then(|v| v.parse::<u64>().ok())
        })
        .unwrap_or(0)
}

fn data_paths(task: Task, dir: &Path) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}_train.bnnds", task.name())),
        dir.join(format!("{}_test.bnnds", task.name())),
    )
}

fn load_datasets(task: Task, dir: &Path) -> Result<(TrainSet, TestSet), Error> {
    let (train_path, test_path) = data_paths(task, dir);
    let train = dataset::load(&train_path)?;
    let test = dataset::load(&test_path)?;
    Ok((TrainSet(train), TestSet(test)))
}

fn summarize(path: &Path) -> Result<serde_json::Value, Error> {
    let (header, hist) = dataset::summary(path)?;
    Ok(serde_json::json!({
        "file": path.display().to_string(),
        "header": header,
        "label_histogram": hist,
    }))
}

fn print_sweep_summary(report: &SweepReport) {
    println!("sweep: {} ({} cells)", report.task.name(), report.cells.len());
    match report.task {
        Task::Occlusion | Task::Support => {
            let conditions: Vec<String> = report
                .cells
                .first()
                .and_then(|c| c.condition_errors.as_ref())
                .map(|m| m.keys().cloned().collect())
                .unwrap_or_default();
            let mut ns: Vec<usize> = report.cells.iter().map(|c| c.n).collect();
            ns.dedup();
            println!("mean test error over seeds");
            print!("{:>8}", "N");
            for c in &conditions {
                print!("  {c:>16}");
            }
            println!();
            for n in ns {
                print!("{n:>8}");
                for c in &conditions {
                    match report.mean_condition_error(n, c) {
                        Some(e) => print!("  {:>16.4}", e),
                        None => print!("  {:>16}", "-"),
                    }
                }
                println!();
            }
        }
        Task::Numerosity => {
            println!("{:>8}  {:>10}  {:>12}  {:>8}", "N", "weber", "status", "epochs");
            for cell in &report.cells {
                let (value, status) = cell
                    .weber
                    .as_ref()
                    .map(|w| {
                        (
                            w.value.map_or("nan".to_string(), |v| format!("{v:.4}")),
                            w.status.clone(),
                        )
                    })
                    .unwrap_or_else(|| ("-".into(), "-".into()));
                println!("{:>8}  {:>10}  {:>12}  {:>8}", cell.n, value, status, cell.epochs);
            }
            if let Ok(fit) = bnnvi::experiment::fit_report_curve(report) {
                println!(
                    "exponential fit: A = {:.4}, b = {:.3e}, d = {:.4}, R^2 = {:.4}",
                    fit.amplitude, fit.rate, fit.asymptote, fit.r_squared
                );
            }
        }
    }
    if !report.failures.is_empty() {
        eprintln!("failed cells:");
        for (name, err) in &report.failures {
            eprintln!("  {name}: {err}");
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = resolve_seed(cli.seed, &cfg);

    match cli.command {
        Command::Gen { task, out } => {
            let out = cfg.data_dir.clone().unwrap_or(out);
            std::fs::create_dir_all(&out)?;
            let (train, test) = dataset::build_train_test(task, seed)?;
            let (train_path, test_path) = data_paths(task, &out);
            dataset::save(&train.0, &train_path)?;
            dataset::save(&test.0, &test_path)?;
            let summary = serde_json::json!({
                "train": summarize(&train_path)?,
                "test": summarize(&test_path)?,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
        Command::Train { task, n, data, runs } => {
            let data_dir = data.or(cfg.data_dir.clone()).unwrap_or_else(|| "data".into());
            let runs_dir = runs.or(cfg.runs_dir.clone()).unwrap_or_else(|| "runs".into());
            let (train_set, test_set) = load_datasets(task, &data_dir)?;
            let train_cfg: TrainConfig = cfg.train_config(task, seed);
            let sweep_cfg = cfg.sweep_config(task);
            let cell = run_cell(
                &train_set,
                &test_set,
                &runs_dir,
                &train_cfg,
                sweep_cfg.mc_samples,
                n,
                None,
            )?;
            println!("{}", serde_json::to_string_pretty(&cell)?);
            Ok(0)
        }
        Command::Sweep {
            task,
            data,
            runs,
            workers,
        } => {
            let data_dir = data.or(cfg.data_dir.clone()).unwrap_or_else(|| "data".into());
            let runs_dir = runs.or(cfg.runs_dir.clone()).unwrap_or_else(|| "runs".into());
            let (train_set, test_set) = load_datasets(task, &data_dir)?;
            let train_cfg = cfg.train_config(task, seed);
            let mut sweep_cfg = cfg.sweep_config(task);
            if let Some(w) = workers {
                sweep_cfg.workers = w;
            }
            let report = match task {
                Task::Occlusion | Task::Support => {
                    sweep_physics(&train_set, &test_set, &sweep_cfg, &train_cfg, &runs_dir)?
                }
                Task::Numerosity => {
                    sweep_numerosity(&train_set, &test_set, &sweep_cfg, &train_cfg, &runs_dir)?
                }
            };
            print_sweep_summary(&report);
            Ok(if report.failures.is_empty() { 0 } else { 2 })
        }
        Command::Report { task, runs, data } => {
            let data_dir = data.or(cfg.data_dir.clone()).unwrap_or_else(|| "data".into());
            let runs_dir = runs.or(cfg.runs_dir.clone()).unwrap_or_else(|| "runs".into());
            let (_, test_set) = load_datasets(task, &data_dir)?;
            let report = regenerate_report(&runs_dir, task, &test_set)?;
            print_sweep_summary(&report);
            Ok(if report.failures.is_empty() { 0 } else { 2 })
        }
        Command::Inspect { file } => {
            println!("{}", serde_json::to_string_pretty(&summarize(&file)?)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with code 0
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Format { .. } => 3,
                Error::Config(_) | Error::Size { .. } => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
