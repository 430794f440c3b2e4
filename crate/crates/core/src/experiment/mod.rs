//! Training loop (single-sample ELBO ascent with Adam, batch 64),
//! convergence policy, and the N-by-seed sweep orchestration.

mod sweep;

pub use sweep::{
    fit_report_curve, pretrain_init, regenerate_report, run_cell, sweep_numerosity, sweep_physics,
    write_report_csvs, CellMetrics, RatioPoint, SweepConfig, SweepReport, WeberJson,
    NUMEROSITY_N_GRID, PHYSICS_N_GRID, PRETRAIN_BUDGET,
};

use crate::dataset::{subset, LabelKind, Task, TrainSet};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Matrix};
use crate::rng::substream;
use crate::vi::{BnnModel, Head, Targets};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Training hyperparameters. Defaults reproduce the experimental setup:
/// 3 layers, ELU, batch 64, Adam at 1e-3, tau0 = 1e-5, convergence when
/// the best epoch-averaged ELBO improves by less than 1e-4 relative over
/// a 50-epoch window (3000 epochs at most).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub tau0: f64,
    pub max_epochs: usize,
    pub conv_window: usize,
    pub conv_tol: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Occlusion / support defaults (256 hidden units).
    pub fn physics(seed: u64) -> Self {
        Self {
            hidden: 256,
            hidden_layers: 2,
            batch: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            tau0: 1e-5,
            max_epochs: 3000,
            conv_window: 50,
            conv_tol: 1e-4,
            seed,
        }
    }

    /// Numerosity defaults (512 hidden units).
    pub fn numerosity(seed: u64) -> Self {
        Self {
            hidden: 512,
            ..Self::physics(seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: Task,
    pub n: usize,
    pub seed: u64,
    pub epochs: usize,
    pub final_elbo: f64,
    pub best_elbo: f64,
    pub wall_secs: f64,
}

/// rng substream tags within one training run.
const STREAM_SUBSET: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Derives an independent 64-bit seed for a tagged sub-purpose.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    substream(seed, tag).next_u64()
}

fn head_for(task: Task) -> Head {
    match task.label_kind() {
        LabelKind::Binary => Head::BernoulliLogit,
        LabelKind::CountPair => Head::Categorical { classes: 10 },
    }
}

/// One training item: sample index and, for numerosity, which image of
/// the pair.
type Item = (usize, usize);

fn training_items(ds: &crate::dataset::Dataset) -> Vec<Item> {
    match ds.task.label_kind() {
        LabelKind::Binary => (0..ds.n()).map(|i| (i, 0)).collect(),
        LabelKind::CountPair => (0..ds.n()).flat_map(|i| [(i, 0), (i, 1)]).collect(),
    }
}

fn item_label(ds: &crate::dataset::Dataset, item: Item) -> u8 {
    match ds.task.label_kind() {
        LabelKind::Binary => ds.label(item.0) as u8,
        LabelKind::CountPair => {
            let (a, b) = ds.counts(item.0);
            (if item.1 == 0 { a } else { b }) as u8
        }
    }
}

/// Trains a model on a stratified size-`n` subset of the training set.
///
/// Numerosity pairs contribute their two images as independent
/// count-regression samples, so the likelihood rescaling constant is the
/// number of single-image items (2n for numerosity, n otherwise).
/// Deterministic given the config seed; `init` (when given) replaces the
/// fresh initializer with pretrained variational parameters.
pub fn train(
    data: &TrainSet,
    n: usize,
    cfg: &TrainConfig,
    init: Option<&BnnModel>,
) -> Result<(BnnModel, RunRecord)> {
    let start = std::time::Instant::now();
    let ds = subset(&data.0, n, derive_seed(cfg.seed, STREAM_SUBSET))?;
    let dim = ds.input_dim();
    let head = head_for(ds.task);

    let mut model = match init {
        Some(m) => {
            if m.input_dim() != dim || m.head != head {
                return Err(Error::Shape {
                    op: "train",
                    expected: format!("init model for {} inputs", dim),
                    got: format!("{} inputs", m.input_dim()),
                });
            }
            m.clone()
        }
        None => BnnModel::init(
            dim,
            cfg.hidden,
            cfg.hidden_layers,
            head,
            cfg.tau0,
            &mut substream(cfg.seed, STREAM_INIT),
        ),
    };

    let mut states: Vec<Vec<AdamState>> = model
        .param_layers()
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|p| {
                    let mut st = AdamState::new(p.rows(), p.cols()).with_lr(cfg.lr);
                    st.beta1 = cfg.beta1;
                    st.beta2 = cfg.beta2;
                    st.epsilon = cfg.epsilon;
                    st
                })
                .collect()
        })
        .collect();

    let mut items = training_items(&ds);
    let n_total = items.len();
    let mut shuffle_rng = substream(cfg.seed, STREAM_SHUFFLE);
    let mut noise_rng = substream(cfg.seed, STREAM_NOISE);

    let mut best_at: Vec<f64> = Vec::with_capacity(cfg.max_epochs);
    let mut final_elbo = f64::NEG_INFINITY;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        items.shuffle(&mut shuffle_rng);
        let mut epoch_sum = 0.0;
        let mut batches = 0.0;
        for (batch_idx, batch) in items.chunks(cfg.batch).enumerate() {
            let mut x = Matrix::zeros(batch.len(), dim);
            let mut labels = Vec::with_capacity(batch.len());
            for (r, &item) in batch.iter().enumerate() {
                ds.write_input(item.0, item.1, &mut x.data_mut()[r * dim..(r + 1) * dim]);
                labels.push(item_label(&ds, item));
            }
            let targets = match ds.task.label_kind() {
                LabelKind::Binary => Targets::Binary(&labels),
                LabelKind::CountPair => Targets::Counts(&labels),
            };
            let out = model.elbo_grads(&x, &targets, n_total, &mut noise_rng)?;
            if !out.elbo.is_finite() {
                let norm = model
                    .param_layers()
                    .iter()
                    .flat_map(|ps| ps.iter().map(|p| p.max_abs()))
                    .fold(0.0f64, f64::max);
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    msg: format!("ELBO = {}, max |param| = {norm}", out.elbo),
                });
            }
            for (lp, (lg, ls)) in model
                .param_layers_mut()
                .into_iter()
                .zip(out.grads.iter().zip(states.iter_mut()))
            {
                for (p, (g, st)) in lp.into_iter().zip(lg.iter().zip(ls.iter_mut())) {
                    adam_step(p, g, st)?;
                }
            }
            epoch_sum += out.elbo;
            batches += 1.0;
        }
        let epoch_elbo = epoch_sum / batches;
        final_elbo = epoch_elbo;
        epochs_run = epoch;

        let best_now = best_at.last().copied().unwrap_or(f64::NEG_INFINITY).max(epoch_elbo);
        best_at.push(best_now);
        if epoch > cfg.conv_window {
            let past = best_at[epoch - 1 - cfg.conv_window];
            if best_now - past < cfg.conv_tol * past.abs().max(1.0) {
                break;
            }
        }
    }

    let record = RunRecord {
        task: ds.task,
        n,
        seed: cfg.seed,
        epochs: epochs_run,
        final_elbo,
        best_elbo: *best_at.last().unwrap(),
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, record))
}
