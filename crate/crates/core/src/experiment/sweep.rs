//! N-by-seed sweep orchestration: resumable run directories, evaluation,
//! and CSV report emission.
//!
//! Run layout: `<runs>/<task>/N<size>_s<seed>/` holding `checkpoint.bnnvi`,
//! `config.json` (snapshot) and `metrics.json`. A cell whose metrics file
//! already exists with a matching config snapshot is skipped on rerun.

use super::{derive_seed, train, RunRecord, TrainConfig};
use crate::dataset::{Task, TestSet, TrainSet};
use crate::error::{Error, Result};
use crate::metrics::{
    fit_exponential, pair_accuracy_by_ratio, per_condition_error, weber_ratio, AccuracyByRatio,
    ExponentialFit,
};
use crate::rng::substream;
use crate::vi::{checkpoint, BnnModel};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Data-set sizes for the occlusion / support sweeps. 4096 is part of the
/// grid so the reported thresholds around it are observable.
pub const PHYSICS_N_GRID: [usize; 6] = [256, 512, 1024, 2048, 4096, 8192];

/// Numerosity sweep sizes: {4..15} * 2048 pairs.
pub const NUMEROSITY_N_GRID: [usize; 12] = [
    8192, 10240, 12288, 14336, 16384, 18432, 20480, 22528, 24576, 26624, 28672, 30720,
];

/// Fraction of the epoch budget used by the pretraining run that seeds
/// every numerosity sweep model.
pub const PRETRAIN_BUDGET: f64 = 0.25;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepConfig {
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub mc_samples: usize,
    pub workers: usize,
}

impl SweepConfig {
    pub fn physics() -> Self {
        Self {
            n_grid: PHYSICS_N_GRID.to_vec(),
            seeds: (0..10).collect(),
            mc_samples: 100,
            workers: 0,
        }
    }

    /// One model per N, a single seed.
    pub fn numerosity() -> Self {
        Self {
            n_grid: NUMEROSITY_N_GRID.to_vec(),
            seeds: vec![0],
            mc_samples: 100,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RatioPoint {
    pub accuracy: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeberJson {
    pub value: Option<f64>,
    pub status: String,
}

/// Everything recorded for one completed sweep cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CellMetrics {
    pub task: Task,
    pub n: usize,
    pub seed: u64,
    pub epochs: usize,
    pub final_elbo: f64,
    pub best_elbo: f64,
    pub wall_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_errors: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_accuracy: Option<BTreeMap<u8, RatioPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weber: Option<WeberJson>,
}

/// Snapshot stored next to each checkpoint so reruns can verify they are
/// resuming the same experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct CellConfig {
    task: Task,
    n: usize,
    seed: u64,
    mc_samples: usize,
    train: TrainConfig,
    pretrained_init: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: Task,
    pub cells: Vec<CellMetrics>,
    pub failures: Vec<(String, String)>,
}

impl SweepReport {
    pub fn cell(&self, n: usize, seed: u64) -> Option<&CellMetrics> {
        self.cells.iter().find(|c| c.n == n && c.seed == seed)
    }

    /// Mean over seeds of one condition's error at one N.
    pub fn mean_condition_error(&self, n: usize, condition: &str) -> Option<f64> {
        let errs: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.n == n)
            .filter_map(|c| c.condition_errors.as_ref()?.get(condition).copied())
            .collect();
        if errs.is_empty() {
            None
        } else {
            Some(errs.iter().sum::<f64>() / errs.len() as f64)
        }
    }
}

fn cell_dir(runs_root: &Path, task: Task, n: usize, seed: u64) -> PathBuf {
    runs_root.join(task.name()).join(format!("N{n}_s{seed}"))
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(serde_json::to_string_pretty(value)?.as_bytes())?;
    f.write_all(b"\n")?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Deterministic evaluation stream for one cell.
fn eval_rng(n: usize, seed: u64) -> rand_chacha::ChaCha8Rng {
    substream(derive_seed(seed, 0x4556_4100_0000_0000 | n as u64), 0)
}

fn evaluate(
    model: &BnnModel,
    test: &TestSet,
    n: usize,
    seed: u64,
    mc_samples: usize,
    record: &RunRecord,
) -> Result<CellMetrics> {
    let mut rng = eval_rng(n, seed);
    let mut cell = CellMetrics {
        task: record.task,
        n,
        seed,
        epochs: record.epochs,
        final_elbo: record.final_elbo,
        best_elbo: record.best_elbo,
        wall_secs: record.wall_secs,
        condition_errors: None,
        ratio_accuracy: None,
        weber: None,
    };
    match record.task {
        Task::Occlusion | Task::Support => {
            cell.condition_errors = Some(per_condition_error(model, test, mc_samples, &mut rng)?);
        }
        Task::Numerosity => {
            let acc = pair_accuracy_by_ratio(model, test, mc_samples, &mut rng)?;
            let weber = weber_ratio(&acc);
            let mut by_ratio = BTreeMap::new();
            for smaller in 1..=9u8 {
                if let Some(a) = acc.accuracy(smaller) {
                    by_ratio.insert(
                        smaller,
                        RatioPoint {
                            accuracy: a,
                            trials: acc.trials(smaller),
                        },
                    );
                }
            }
            cell.ratio_accuracy = Some(by_ratio);
            cell.weber = Some(WeberJson {
                value: weber.value(),
                status: weber.status().to_string(),
            });
        }
    }
    Ok(cell)
}

/// Trains and evaluates one sweep cell, or loads it when already
/// complete with an identical config snapshot.
pub fn run_cell(
    data: &TrainSet,
    test: &TestSet,
    runs_root: &Path,
    cfg: &TrainConfig,
    mc_samples: usize,
    n: usize,
    init: Option<&BnnModel>,
) -> Result<CellMetrics> {
    let task = data.0.task;
    let dir = cell_dir(runs_root, task, n, cfg.seed);
    std::fs::create_dir_all(&dir)?;
    let snapshot = CellConfig {
        task,
        n,
        seed: cfg.seed,
        mc_samples,
        train: cfg.clone(),
        pretrained_init: init.is_some(),
    };

    let metrics_path = dir.join("metrics.json");
    let config_path = dir.join("config.json");
    if metrics_path.exists() {
        let stored: CellConfig = read_json(&config_path)?;
        if stored != snapshot {
            return Err(Error::Config(format!(
                "{} exists with a different config; refusing to reuse",
                dir.display()
            )));
        }
        return read_json(&metrics_path);
    }

    let (model, record) = train(data, n, cfg, init)?;
    checkpoint::save(&model, &dir.join("checkpoint.bnnvi"))?;
    write_json_atomic(&config_path, &snapshot)?;
    let cell = evaluate(&model, test, n, cfg.seed, mc_samples, &record)?;
    write_json_atomic(&metrics_path, &cell)?;
    Ok(cell)
}

fn pool(workers: usize) -> rayon::ThreadPool {
    let threads = if workers == 0 {
        std::thread::available_parallelism()
            .map(|v| v.get())
            .unwrap_or(1)
    } else {
        workers
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Full occlusion / support sweep over the N grid and seeds. Failed cells
/// are reported, not fatal.
pub fn sweep_physics(
    data: &TrainSet,
    test: &TestSet,
    sweep: &SweepConfig,
    base: &TrainConfig,
    runs_root: &Path,
) -> Result<SweepReport> {
    use rayon::prelude::*;
    let task = data.0.task;
    let cells: Vec<(usize, u64)> = sweep
        .n_grid
        .iter()
        .flat_map(|&n| sweep.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let results: Vec<(String, Result<CellMetrics>)> = pool(sweep.workers).install(|| {
        cells
            .par_iter()
            .map(|&(n, seed)| {
                let cfg = TrainConfig { seed, ..base.clone() };
                let name = format!("N{n}_s{seed}");
                (
                    name,
                    run_cell(data, test, runs_root, &cfg, sweep.mc_samples, n, None),
                )
            })
            .collect()
    });
    let mut report = SweepReport {
        task,
        cells: Vec::new(),
        failures: Vec::new(),
    };
    for (name, result) in results {
        match result {
            Ok(cell) => report.cells.push(cell),
            Err(e) => report.failures.push((name, e.to_string())),
        }
    }
    report.cells.sort_by_key(|c| (c.n, c.seed));
    write_report_csvs(&report, &runs_root.join(task.name()))?;
    Ok(report)
}

/// Trains the shared numerosity initializer: the smallest sweep size for
/// a quarter of the epoch budget, then its variational parameters seed
/// every sweep model. Resumable through its own run directory.
pub fn pretrain_init(
    data: &TrainSet,
    sweep: &SweepConfig,
    base: &TrainConfig,
    runs_root: &Path,
) -> Result<BnnModel> {
    let n = *sweep.n_grid.iter().min().expect("nonempty grid");
    let cfg = TrainConfig {
        max_epochs: ((base.max_epochs as f64 * PRETRAIN_BUDGET).round() as usize).max(1),
        seed: derive_seed(base.seed, 0x5052_4554),
        ..base.clone()
    };
    let dir = runs_root.join(data.0.task.name()).join("pretrain");
    std::fs::create_dir_all(&dir)?;
    let ckpt = dir.join("checkpoint.bnnvi");
    let config_path = dir.join("config.json");
    let snapshot = CellConfig {
        task: data.0.task,
        n,
        seed: cfg.seed,
        mc_samples: sweep.mc_samples,
        train: cfg.clone(),
        pretrained_init: false,
    };
    if ckpt.exists() {
        let stored: CellConfig = read_json(&config_path)?;
        if stored == snapshot {
            return checkpoint::load(&ckpt);
        }
        return Err(Error::Config(format!(
            "{} exists with a different config; refusing to reuse",
            dir.display()
        )));
    }
    let (model, record) = train(data, n, &cfg, None)?;
    checkpoint::save(&model, &ckpt)?;
    write_json_atomic(&config_path, &snapshot)?;
    write_json_atomic(&dir.join("metrics.json"), &record)?;
    Ok(model)
}

/// Numerosity sweep: every model starts from the shared pretrained
/// parameters and trains on its own pair subset.
pub fn sweep_numerosity(
    data: &TrainSet,
    test: &TestSet,
    sweep: &SweepConfig,
    base: &TrainConfig,
    runs_root: &Path,
) -> Result<SweepReport> {
    use rayon::prelude::*;
    let task = data.0.task;
    let init = pretrain_init(data, sweep, base, runs_root)?;
    let seed = *sweep.seeds.first().unwrap_or(&base.seed);
    let results: Vec<(String, Result<CellMetrics>)> = pool(sweep.workers).install(|| {
        sweep
            .n_grid
            .par_iter()
            .map(|&n| {
                let cfg = TrainConfig { seed, ..base.clone() };
                let name = format!("N{n}_s{seed}");
                (
                    name,
                    run_cell(data, test, runs_root, &cfg, sweep.mc_samples, n, Some(&init)),
                )
            })
            .collect()
    });
    let mut report = SweepReport {
        task,
        cells: Vec::new(),
        failures: Vec::new(),
    };
    for (name, result) in results {
        match result {
            Ok(cell) => report.cells.push(cell),
            Err(e) => report.failures.push((name, e.to_string())),
        }
    }
    report.cells.sort_by_key(|c| (c.n, c.seed));
    write_report_csvs(&report, &runs_root.join(task.name()))?;
    Ok(report)
}

/// Weber points (N, value) from completed numerosity cells.
fn weber_points(report: &SweepReport) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for cell in &report.cells {
        if let Some(w) = &cell.weber {
            if let Some(v) = w.value {
                xs.push(cell.n as f64);
                ys.push(v);
            }
        }
    }
    (xs, ys)
}

/// Exponential developmental-curve fit over the sweep's Weber estimates.
pub fn fit_report_curve(report: &SweepReport) -> Result<ExponentialFit> {
    let (xs, ys) = weber_points(report);
    fit_exponential(&xs, &ys)
}

/// Emits the CSV outputs with fixed column orders:
/// `condition_errors.csv` (task,N,seed,condition,error),
/// `ans_accuracy.csv` (N,ratio,accuracy,trials),
/// `weber.csv` (N,weber,status), `fit.csv` (A,b,d,r2).
pub fn write_report_csvs(report: &SweepReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    match report.task {
        Task::Occlusion | Task::Support => {
            let mut out = String::from("task,N,seed,condition,error\n");
            for cell in &report.cells {
                if let Some(errors) = &cell.condition_errors {
                    for (condition, error) in errors {
                        out.push_str(&format!(
                            "{},{},{},{},{}\n",
                            report.task.name(),
                            cell.n,
                            cell.seed,
                            condition,
                            error
                        ));
                    }
                }
            }
            std::fs::write(dir.join("condition_errors.csv"), out)?;
        }
        Task::Numerosity => {
            let mut acc = String::from("N,ratio,accuracy,trials\n");
            let mut weber = String::from("N,weber,status\n");
            for cell in &report.cells {
                if let Some(by_ratio) = &cell.ratio_accuracy {
                    // ascending ratio: 10:9 first
                    for (&smaller, point) in by_ratio.iter().rev() {
                        acc.push_str(&format!(
                            "{},{:.6},{},{}\n",
                            cell.n,
                            AccuracyByRatio::ratio_value(smaller),
                            point.accuracy,
                            point.trials
                        ));
                    }
                }
                if let Some(w) = &cell.weber {
                    let value = w
                        .value
                        .map(|v| format!("{v}"))
                        .unwrap_or_else(|| "nan".to_string());
                    weber.push_str(&format!("{},{},{}\n", cell.n, value, w.status));
                }
            }
            std::fs::write(dir.join("ans_accuracy.csv"), acc)?;
            std::fs::write(dir.join("weber.csv"), weber)?;

            let mut fit_csv = String::from("A,b,d,r2\n");
            if let Ok(fit) = fit_report_curve(report) {
                fit_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    fit.amplitude, fit.rate, fit.asymptote, fit.r_squared
                ));
            }
            std::fs::write(dir.join("fit.csv"), fit_csv)?;
        }
    }
    Ok(())
}

/// Re-evaluates every completed cell directory from its checkpoint,
/// rewriting metrics and CSVs. Returns the report plus the list of
/// missing or corrupt cells.
pub fn regenerate_report(
    runs_root: &Path,
    task: Task,
    test: &TestSet,
) -> Result<SweepReport> {
    let task_dir = runs_root.join(task.name());
    let mut report = SweepReport {
        task,
        cells: Vec::new(),
        failures: Vec::new(),
    };
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&task_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| s.starts_with('N'))
        })
        .collect();
    entries.sort();
    for dir in entries {
        let name = dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let result = (|| -> Result<CellMetrics> {
            let cfg: CellConfig = read_json(&dir.join("config.json"))?;
            let model = checkpoint::load(&dir.join("checkpoint.bnnvi"))?;
            let record = RunRecord {
                task: cfg.task,
                n: cfg.n,
                seed: cfg.seed,
                epochs: 0,
                final_elbo: f64::NAN,
                best_elbo: f64::NAN,
                wall_secs: 0.0,
            };
            // keep the training bookkeeping from the stored metrics when
            // present
            let stored: Option<CellMetrics> = read_json(&dir.join("metrics.json")).ok();
            let mut cell = evaluate(&model, test, cfg.n, cfg.seed, cfg.mc_samples, &record)?;
            if let Some(prev) = stored {
                cell.epochs = prev.epochs;
                cell.final_elbo = prev.final_elbo;
                cell.best_elbo = prev.best_elbo;
                cell.wall_secs = prev.wall_secs;
            }
            write_json_atomic(&dir.join("metrics.json"), &cell)?;
            Ok(cell)
        })();
        match result {
            Ok(cell) => report.cells.push(cell),
            Err(e) => report.failures.push((name, e.to_string())),
        }
    }
    report.cells.sort_by_key(|c| (c.n, c.seed));
    write_report_csvs(&report, &task_dir)?;
    Ok(report)
}
