//! Balanced data-set assembly with per-sample rng substreams, stratified
//! size-N subsetting and a deterministic binary file format.
//!
//! Every sample is generated from `substream(seed, index)`, so builders
//! may run in parallel without changing a single byte, and any sample can
//! be regenerated in isolation (the train/test dedupe pass relies on
//! this).

mod format;

pub use format::{inspect, load, save, summary, Header};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scenes::{
    gen_numerosity_pair_ordered, gen_occlusion, gen_support, OcclusionCondition, SupportCondition,
    IMG,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Occlusion,
    Support,
    Numerosity,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Occlusion => "occlusion",
            Task::Support => "support",
            Task::Numerosity => "numerosity",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Task::Occlusion | Task::Support => 3,
            Task::Numerosity => 2,
        }
    }

    pub fn label_kind(&self) -> LabelKind {
        match self {
            Task::Occlusion | Task::Support => LabelKind::Binary,
            Task::Numerosity => LabelKind::CountPair,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "occlusion" => Ok(Task::Occlusion),
            "support" => Ok(Task::Support),
            "numerosity" => Ok(Task::Numerosity),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Binary,
    CountPair,
}

/// Rendered samples with labels, condition tags and composition metadata.
///
/// Binary tasks store one label per sample; numerosity stores the two
/// object counts of the pair. The condition tag is the condition index
/// for physics tasks and the smaller pair count (the ratio denominator)
/// for numerosity. Reads through the accessors are counted so tests can
/// audit that training never touches held-out data.
#[derive(Debug)]
pub struct Dataset {
    pub task: Task,
    pub channels: usize,
    images: Vec<u8>,
    labels: Vec<u16>,
    tags: Vec<u8>,
    pub seed: u64,
    pub composition: BTreeMap<String, u64>,
    reads: AtomicU64,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Self {
            task: self.task,
            channels: self.channels,
            images: self.images.clone(),
            labels: self.labels.clone(),
            tags: self.tags.clone(),
            seed: self.seed,
            composition: self.composition.clone(),
            reads: AtomicU64::new(0),
        }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.task == other.task
            && self.channels == other.channels
            && self.images == other.images
            && self.labels == other.labels
            && self.tags == other.tags
            && self.seed == other.seed
            && self.composition == other.composition
    }
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.tags.len()
    }

    fn image_len(&self) -> usize {
        self.channels * IMG * IMG
    }

    /// Raw bytes of sample `i`, `channels * 24 * 24` occupancy values.
    pub fn image(&self, i: usize) -> &[u8] {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let len = self.image_len();
        &self.images[i * len..(i + 1) * len]
    }

    /// Binary label of sample `i` (binary tasks only).
    pub fn label(&self, i: usize) -> u16 {
        self.reads.fetch_add(1, Ordering::Relaxed);
        debug_assert_eq!(self.task.label_kind(), LabelKind::Binary);
        self.labels[i]
    }

    /// (first count, second count) of pair `i` (numerosity only).
    pub fn counts(&self, i: usize) -> (u16, u16) {
        self.reads.fetch_add(1, Ordering::Relaxed);
        debug_assert_eq!(self.task.label_kind(), LabelKind::CountPair);
        (self.labels[2 * i], self.labels[2 * i + 1])
    }

    pub fn tag(&self, i: usize) -> u8 {
        self.tags[i]
    }

    /// Human-readable condition name for a tag value.
    pub fn condition_name(&self, tag: u8) -> String {
        condition_name(self.task, tag)
    }

    /// Number of accessor reads since construction (audit counter).
    pub fn read_count(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    /// Width of one network input row: the whole flattened image for
    /// binary tasks, one image of the pair for numerosity.
    pub fn input_dim(&self) -> usize {
        match self.task.label_kind() {
            LabelKind::Binary => self.channels * IMG * IMG,
            LabelKind::CountPair => IMG * IMG,
        }
    }

    /// Writes the flattened 0/1 input for sample `i` into `out`. For
    /// numerosity `part` selects the pair half; binary tasks only accept
    /// `part = 0`.
    pub fn write_input(&self, i: usize, part: usize, out: &mut [f64]) {
        let dim = self.input_dim();
        assert_eq!(out.len(), dim);
        let img = self.image(i);
        let src = match self.task.label_kind() {
            LabelKind::Binary => {
                assert_eq!(part, 0);
                img
            }
            LabelKind::CountPair => &img[part * dim..(part + 1) * dim],
        };
        for (o, &b) in out.iter_mut().zip(src) {
            *o = b as f64;
        }
    }

    pub fn label_histogram(&self) -> BTreeMap<String, u64> {
        let mut hist = BTreeMap::new();
        match self.task.label_kind() {
            LabelKind::Binary => {
                for &l in &self.labels {
                    *hist.entry(format!("y={l}")).or_insert(0) += 1;
                }
            }
            LabelKind::CountPair => {
                for pair in self.labels.chunks_exact(2) {
                    let key = if pair[0] > pair[1] {
                        "larger_first"
                    } else {
                        "larger_second"
                    };
                    *hist.entry(key.to_string()).or_insert(0) += 1;
                }
            }
        }
        hist
    }

    fn from_parts(
        task: Task,
        seed: u64,
        images: Vec<u8>,
        labels: Vec<u16>,
        tags: Vec<u8>,
    ) -> Self {
        let mut composition = BTreeMap::new();
        for &t in &tags {
            *composition.entry(condition_name(task, t)).or_insert(0) += 1;
        }
        Self {
            task,
            channels: task.channels(),
            images,
            labels,
            tags,
            seed,
            composition,
            reads: AtomicU64::new(0),
        }
    }
}

pub fn condition_name(task: Task, tag: u8) -> String {
    match task {
        Task::Occlusion => OcclusionCondition::ALL[tag as usize].name().to_string(),
        Task::Support => SupportCondition::ALL[tag as usize].name().to_string(),
        Task::Numerosity => format!("{}:{}", tag + 1, tag),
    }
}

/// Newtype handles keeping training and evaluation data apart at the type
/// level.
#[derive(Debug, Clone)]
pub struct TrainSet(pub Dataset);

#[derive(Debug, Clone)]
pub struct TestSet(pub Dataset);

/// What to generate for one sample slot. The plan fixes composition and
/// label balance exactly; the rng only fills in geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
enum SampleSpec {
    Occlusion {
        cond: OcclusionCondition,
        required_visible: Option<bool>,
    },
    Support {
        cond: SupportCondition,
        required_stable: Option<bool>,
    },
    Numerosity {
        smaller: usize,
        larger_first: bool,
    },
}

fn occlusion_plan() -> Vec<SampleSpec> {
    let mut plan = Vec::with_capacity(10_000);
    for _ in 0..4000 {
        plan.push(SampleSpec::Occlusion {
            cond: OcclusionCondition::Baseline,
            required_visible: None,
        });
    }
    for _ in 0..2000 {
        plan.push(SampleSpec::Occlusion {
            cond: OcclusionCondition::Middle,
            required_visible: None,
        });
    }
    for _ in 0..2000 {
        plan.push(SampleSpec::Occlusion {
            cond: OcclusionCondition::Bottom,
            required_visible: None,
        });
    }
    // global 5000/5000 label balance forces the top condition to split
    // 1000 visible / 1000 hidden
    for i in 0..2000 {
        plan.push(SampleSpec::Occlusion {
            cond: OcclusionCondition::Top,
            required_visible: Some(i < 1000),
        });
    }
    plan
}

fn support_plan() -> Vec<SampleSpec> {
    let mut plan = Vec::with_capacity(10_000);
    for cond in SupportCondition::ALL {
        for i in 0..2500 {
            plan.push(SampleSpec::Support {
                cond,
                required_stable: Some(i < 1250),
            });
        }
    }
    plan
}

fn numerosity_plan() -> Vec<SampleSpec> {
    let mut plan = Vec::with_capacity(54_000);
    // ratio list from 10:9 down to 2:1
    for smaller in (1..=9usize).rev() {
        for i in 0..6000 {
            plan.push(SampleSpec::Numerosity {
                smaller,
                larger_first: i < 3000,
            });
        }
    }
    plan
}

/// Renders one sample slot from its dedicated rng stream.
fn gen_sample(spec: &SampleSpec, seed: u64, stream: u64) -> Result<(Vec<u8>, Vec<u16>, u8)> {
    let mut rng = substream(seed, stream);
    match *spec {
        SampleSpec::Occlusion {
            cond,
            required_visible,
        } => {
            let (scene, visible) = gen_occlusion(cond, required_visible, &mut rng)?;
            let tag = OcclusionCondition::ALL.iter().position(|c| *c == cond).unwrap() as u8;
            // y = 1 means the cylinder is NOT visible
            Ok((
                scene.render().as_bytes().to_vec(),
                vec![u16::from(!visible)],
                tag,
            ))
        }
        SampleSpec::Support {
            cond,
            required_stable,
        } => {
            let (scene, stable) = gen_support(cond, required_stable, &mut rng)?;
            let tag = SupportCondition::ALL.iter().position(|c| *c == cond).unwrap() as u8;
            Ok((
                scene.render().as_bytes().to_vec(),
                vec![u16::from(stable)],
                tag,
            ))
        }
        SampleSpec::Numerosity {
            smaller,
            larger_first,
        } => {
            let (first, second) = gen_numerosity_pair_ordered(smaller, larger_first, &mut rng)?;
            let mut bytes = first.render().as_bytes().to_vec();
            bytes.extend_from_slice(second.render().as_bytes());
            Ok((
                bytes,
                vec![first.count() as u16, second.count() as u16],
                smaller as u8,
            ))
        }
    }
}

fn build_from_plan(task: Task, plan: &[SampleSpec], seed: u64) -> Result<Dataset> {
    let samples: Vec<(Vec<u8>, Vec<u16>, u8)> = plan
        .par_iter()
        .enumerate()
        .map(|(i, spec)| gen_sample(spec, seed, i as u64))
        .collect::<Result<_>>()?;
    let mut images = Vec::with_capacity(plan.len() * task.channels() * IMG * IMG);
    let mut labels = Vec::new();
    let mut tags = Vec::with_capacity(plan.len());
    for (img, lab, tag) in samples {
        images.extend_from_slice(&img);
        labels.extend_from_slice(&lab);
        tags.push(tag);
    }
    Ok(Dataset::from_parts(task, seed, images, labels, tags))
}

/// 10000 occlusion samples: 4000 baseline + 2000 per removal condition,
/// labels balanced 5000/5000.
pub fn build_occlusion_set(seed: u64) -> Result<Dataset> {
    build_from_plan(Task::Occlusion, &occlusion_plan(), seed)
}

/// 10000 support samples: 2500 per condition, each split 1250/1250.
pub fn build_support_set(seed: u64) -> Result<Dataset> {
    build_from_plan(Task::Support, &support_plan(), seed)
}

/// 54000 numerosity pairs: 6000 per ratio, larger count first in exactly
/// half of each ratio block.
pub fn build_numerosity_set(seed: u64) -> Result<Dataset> {
    build_from_plan(Task::Numerosity, &numerosity_plan(), seed)
}

fn plan_for(task: Task) -> Vec<SampleSpec> {
    match task {
        Task::Occlusion => occlusion_plan(),
        Task::Support => support_plan(),
        Task::Numerosity => numerosity_plan(),
    }
}

const TEST_SEED_XOR: u64 = 0x5445_5354; // "TEST"

/// Builds the train/test pair from disjoint seeds and removes exact
/// train/test duplicates by regenerating the colliding test slots from
/// fresh substreams (conditions and required labels are preserved, so
/// composition stays exact).
pub fn build_train_test(task: Task, seed: u64) -> Result<(TrainSet, TestSet)> {
    let train = build_from_plan(task, &plan_for(task), seed)?;
    let test_seed = seed ^ TEST_SEED_XOR;
    let mut test = build_from_plan(task, &plan_for(task), test_seed)?;

    // hash -> train sample indices with that image hash
    let mut train_hashes: HashMap<u64, Vec<usize>> = HashMap::new();
    let len = train.image_len();
    for i in 0..train.n() {
        let h = fnv1a(&train.images[i * len..(i + 1) * len]);
        train_hashes.entry(h).or_default().push(i);
    }

    let plan = plan_for(task);
    let n = test.n() as u64;
    for i in 0..test.n() {
        let mut attempt = 0u64;
        loop {
            let bytes = &test.images[i * len..(i + 1) * len];
            let collides = train_hashes.get(&fnv1a(bytes)).is_some_and(|idxs| {
                idxs.iter()
                    .any(|&j| train.images[j * len..(j + 1) * len] == *bytes)
            });
            if !collides {
                break;
            }
            attempt += 1;
            if attempt > 100 {
                return Err(Error::Generation {
                    what: format!("dedupe of test sample {i}"),
                    attempts: 100,
                });
            }
            let (img, lab, tag) = gen_sample(&plan[i], test_seed, i as u64 + n * attempt)?;
            test.images[i * len..(i + 1) * len].copy_from_slice(&img);
            let lw = lab.len();
            test.labels[i * lw..(i + 1) * lw].copy_from_slice(&lab);
            debug_assert_eq!(test.tags[i], tag);
        }
    }
    Ok((TrainSet(train), TestSet(test)))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stratum key: (condition, label) for binary tasks, (ratio,
/// larger-count-position) for numerosity.
fn stratum_key(ds: &Dataset, i: usize) -> (u8, u8) {
    match ds.task.label_kind() {
        LabelKind::Binary => (ds.tags[i], ds.labels[i] as u8),
        LabelKind::CountPair => (
            ds.tags[i],
            u8::from(ds.labels[2 * i] > ds.labels[2 * i + 1]),
        ),
    }
}

/// Stratified subset of size `n` preserving (condition x label)
/// proportions as exactly as divisibility allows (largest-remainder
/// rounding, deterministic given `seed`). Selected samples keep their
/// original relative order.
pub fn subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.n() {
        return Err(Error::Size {
            requested: n,
            available: ds.n(),
        });
    }
    let mut strata: BTreeMap<(u8, u8), Vec<usize>> = BTreeMap::new();
    for i in 0..ds.n() {
        strata.entry(stratum_key(ds, i)).or_default().push(i);
    }
    let total = ds.n() as f64;
    // largest-remainder quotas
    let mut base = 0usize;
    let mut shares: Vec<((u8, u8), usize, f64)> = strata
        .iter()
        .map(|(&key, idxs)| {
            let exact = n as f64 * idxs.len() as f64 / total;
            let floor = exact.floor() as usize;
            base += floor;
            (key, floor, exact - floor as f64)
        })
        .collect();
    let mut leftovers = n - base;
    // ties broken by stratum order
    shares.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    for share in shares.iter_mut() {
        if leftovers == 0 {
            break;
        }
        share.1 += 1;
        leftovers -= 1;
    }
    shares.sort_by(|a, b| a.0.cmp(&b.0));

    let mut selected: Vec<usize> = Vec::with_capacity(n);
    for (si, (key, quota, _)) in shares.iter().enumerate() {
        let idxs = &strata[key];
        let mut order: Vec<usize> = (0..idxs.len()).collect();
        // Fisher-Yates with the stratum's own substream
        let mut rng = substream(seed, si as u64);
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for &o in order.iter().take(*quota) {
            selected.push(idxs[o]);
        }
    }
    selected.sort_unstable();

    let len = ds.image_len();
    let lw = match ds.task.label_kind() {
        LabelKind::Binary => 1,
        LabelKind::CountPair => 2,
    };
    let mut images = Vec::with_capacity(selected.len() * len);
    let mut labels = Vec::with_capacity(selected.len() * lw);
    let mut tags = Vec::with_capacity(selected.len());
    for &i in &selected {
        images.extend_from_slice(&ds.images[i * len..(i + 1) * len]);
        labels.extend_from_slice(&ds.labels[i * lw..(i + 1) * lw]);
        tags.push(ds.tags[i]);
    }
    Ok(Dataset::from_parts(ds.task, seed, images, labels, tags))
}
