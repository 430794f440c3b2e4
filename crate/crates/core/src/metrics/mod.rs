//! Per-condition error rates, pairwise numerosity accuracy by ratio,
//! Weber-ratio estimation by 75%-threshold linear interpolation, and
//! exponential developmental-curve fitting.

mod expfit;

pub use expfit::{fit_exponential, ExponentialFit};

use crate::dataset::{LabelKind, TestSet};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::vi::BnnModel;
use rand::Rng;
use std::collections::BTreeMap;

/// Accuracy threshold defining the Weber ratio.
pub const WEBER_THRESHOLD: f64 = 0.75;

/// Evaluation batches are fixed so recomputation is bit-reproducible.
const EVAL_CHUNK: usize = 2048;

/// Predictive means over `n_rows` input rows filled on demand, chunked to
/// bound memory.
fn predict_rows(
    model: &BnnModel,
    n_rows: usize,
    fill: impl Fn(usize, &mut [f64]),
    samples: usize,
    rng: &mut impl Rng,
) -> Result<Matrix> {
    let dim = model.input_dim();
    let w = model.head_dim();
    let mut out = Matrix::zeros(n_rows, w);
    let mut done = 0;
    while done < n_rows {
        let take = EVAL_CHUNK.min(n_rows - done);
        let mut x = Matrix::zeros(take, dim);
        for r in 0..take {
            fill(done + r, &mut x.data_mut()[r * dim..(r + 1) * dim]);
        }
        let p = model.predict_mc(&x, samples, rng)?;
        out.data_mut()[done * w..(done + take) * w].copy_from_slice(p.data());
        done += take;
    }
    Ok(out)
}

/// Error rate per condition on a binary test set: the thresholded
/// predictive mean (p >= 0.5 predicts y = 1) against the stored label.
pub fn per_condition_error(
    model: &BnnModel,
    test: &TestSet,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<BTreeMap<String, f64>> {
    let ds = &test.0;
    if ds.task.label_kind() != LabelKind::Binary {
        return Err(Error::Domain {
            op: "per_condition_error",
            msg: "binary test set required".into(),
        });
    }
    let p = predict_rows(
        model,
        ds.n(),
        |i, out| ds.write_input(i, 0, out),
        samples,
        rng,
    )?;
    let mut errors: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
    for i in 0..ds.n() {
        let predicted = u16::from(p.at(i, 0) >= 0.5);
        let entry = errors.entry(ds.tag(i)).or_insert((0, 0));
        entry.1 += 1;
        if predicted != ds.label(i) {
            entry.0 += 1;
        }
    }
    Ok(errors
        .into_iter()
        .map(|(tag, (wrong, total))| (ds.condition_name(tag), wrong as f64 / total as f64))
        .collect())
}

/// Accuracy per quantity ratio with trial counts. Keys are the smaller
/// count of the pair (ratio (n+1):n).
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyByRatio {
    per_ratio: BTreeMap<u8, (f64, u64)>,
}

impl AccuracyByRatio {
    pub fn from_scores(per_ratio: BTreeMap<u8, (f64, u64)>) -> Self {
        Self { per_ratio }
    }

    pub fn ratio_value(smaller: u8) -> f64 {
        (smaller as f64 + 1.0) / smaller as f64
    }

    /// (ratio, accuracy, trials) sorted by ascending ratio (10:9 first).
    pub fn points(&self) -> Vec<(f64, f64, u64)> {
        let mut pts: Vec<(f64, f64, u64)> = self
            .per_ratio
            .iter()
            .map(|(&n, &(score, trials))| (Self::ratio_value(n), score / trials as f64, trials))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts
    }

    pub fn accuracy(&self, smaller: u8) -> Option<f64> {
        self.per_ratio
            .get(&smaller)
            .map(|&(score, trials)| score / trials as f64)
    }

    pub fn trials(&self, smaller: u8) -> u64 {
        self.per_ratio.get(&smaller).map_or(0, |&(_, t)| t)
    }
}

/// Pairwise comparison accuracy per ratio: each image's count
/// distribution is predicted, expected counts are compared, and the pair
/// scores 1 when the larger expectation sits on the larger true count
/// (exact ties score 1/2).
pub fn pair_accuracy_by_ratio(
    model: &BnnModel,
    test: &TestSet,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<AccuracyByRatio> {
    let ds = &test.0;
    if ds.task.label_kind() != LabelKind::CountPair {
        return Err(Error::Domain {
            op: "pair_accuracy_by_ratio",
            msg: "numerosity test set required".into(),
        });
    }
    let p = predict_rows(
        model,
        2 * ds.n(),
        |row, out| ds.write_input(row / 2, row % 2, out),
        samples,
        rng,
    )?;
    let classes = model.head_dim();
    let expected = |row: usize| -> f64 {
        (0..classes)
            .map(|k| (k + 1) as f64 * p.at(row, k))
            .sum()
    };
    let mut per_ratio: BTreeMap<u8, (f64, u64)> = BTreeMap::new();
    for i in 0..ds.n() {
        let (c_first, c_second) = ds.counts(i);
        let e_first = expected(2 * i);
        let e_second = expected(2 * i + 1);
        let score = if e_first == e_second {
            0.5
        } else if (e_first > e_second) == (c_first > c_second) {
            1.0
        } else {
            0.0
        };
        let entry = per_ratio.entry(ds.tag(i)).or_insert((0.0, 0));
        entry.0 += score;
        entry.1 += 1;
    }
    Ok(AccuracyByRatio { per_ratio })
}

/// Weber-ratio estimate: the smallest ratio discriminated at 75%
/// accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeberEstimate {
    /// Linear interpolation inside the bracketing ratio interval.
    Interpolated(f64),
    /// Already above threshold at the smallest measured ratio.
    ClippedLow(f64),
    /// Below threshold everywhere.
    Undefined,
}

impl WeberEstimate {
    pub fn value(&self) -> Option<f64> {
        match *self {
            WeberEstimate::Interpolated(v) | WeberEstimate::ClippedLow(v) => Some(v),
            WeberEstimate::Undefined => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            WeberEstimate::Interpolated(_) => "interpolated",
            WeberEstimate::ClippedLow(_) => "clipped_low",
            WeberEstimate::Undefined => "undefined",
        }
    }
}

/// The smallest ratio at which the accuracy curve first reaches 75%:
/// clipped to the smallest measured ratio when already above threshold
/// there, otherwise linearly interpolated inside the first upward
/// crossing, undefined when the threshold is never reached. Checking the
/// smallest ratio before scanning keeps the estimate antitone in the
/// curve (raising accuracies can only lower it).
pub fn weber_ratio(acc: &AccuracyByRatio) -> WeberEstimate {
    let pts = acc.points();
    if pts.len() < 2 {
        return WeberEstimate::Undefined;
    }
    if pts[0].1 >= WEBER_THRESHOLD {
        return WeberEstimate::ClippedLow(pts[0].0);
    }
    for w in pts.windows(2) {
        let (r1, a1, _) = w[0];
        let (r2, a2, _) = w[1];
        if a1 < WEBER_THRESHOLD && WEBER_THRESHOLD <= a2 {
            return WeberEstimate::Interpolated(
                r1 + (WEBER_THRESHOLD - a1) / (a2 - a1) * (r2 - r1),
            );
        }
    }
    WeberEstimate::Undefined
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vs: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..vs.len()).collect();
        order.sort_by(|&a, &b| vs[a].partial_cmp(&vs[b]).unwrap());
        let mut ranks = vec![0.0; vs.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && vs[order[j + 1]] == vs[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &o in &order[i..=j] {
                ranks[o] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}
