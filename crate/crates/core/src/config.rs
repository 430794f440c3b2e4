//! JSON run configuration consumed by the CLI.
//!
//! A config file is one canonical snapshot of an experiment; command-line
//! flags override individual fields. Unknown keys are rejected. Every
//! default matches the experimental setup (hidden sizes 256/512, batch
//! 64, Adam at 1e-3, tau0 = 1e-5, the published N grids, 10 seeds for
//! physics, 100 Monte-Carlo evaluation samples).

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::experiment::{SweepConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub train: TrainOverrides,
    pub sweep: SweepOverrides,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOverrides {
    pub hidden: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub tau0: Option<f64>,
    pub max_epochs: Option<usize>,
    pub conv_window: Option<usize>,
    pub conv_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOverrides {
    pub n_grid: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub mc_samples: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Task defaults with the file's overrides applied.
    pub fn train_config(&self, task: Task, seed: u64) -> TrainConfig {
        let mut cfg = match task {
            Task::Occlusion | Task::Support => TrainConfig::physics(seed),
            Task::Numerosity => TrainConfig::numerosity(seed),
        };
        let t = &self.train;
        if let Some(v) = t.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = t.hidden_layers {
            cfg.hidden_layers = v;
        }
        if let Some(v) = t.batch {
            cfg.batch = v;
        }
        if let Some(v) = t.lr {
            cfg.lr = v;
        }
        if let Some(v) = t.beta1 {
            cfg.beta1 = v;
        }
        if let Some(v) = t.beta2 {
            cfg.beta2 = v;
        }
        if let Some(v) = t.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = t.tau0 {
            cfg.tau0 = v;
        }
        if let Some(v) = t.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = t.conv_window {
            cfg.conv_window = v;
        }
        if let Some(v) = t.conv_tol {
            cfg.conv_tol = v;
        }
        cfg
    }

    pub fn sweep_config(&self, task: Task) -> SweepConfig {
        let mut cfg = match task {
            Task::Occlusion | Task::Support => SweepConfig::physics(),
            Task::Numerosity => SweepConfig::numerosity(),
        };
        if let Some(v) = &self.sweep.n_grid {
            cfg.n_grid = v.clone();
        }
        if let Some(v) = &self.sweep.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.sweep.mc_samples {
            cfg.mc_samples = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg
    }
}
