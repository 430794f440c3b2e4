//! Procedural generation of the three task scenes with exact ground-truth
//! oracles (visibility, stability, counting) and rendering to
//! channel-separated 24x24 binary occupancy images.
//!
//! All generators are pure functions of (condition, rng); rendering is
//! deterministic. Pixel row 0 is the top of the image.

mod numerosity;
mod occlusion;
mod support;

pub use numerosity::{gen_numerosity_pair, gen_numerosity_pair_ordered, NumerosityScene, Square};
pub use occlusion::{
    gen_occlusion, occlusion_visibility_oracle, OcclusionCondition, OcclusionScene, Removal,
};
pub use support::{
    gen_support, shape_centroid_x, stability_oracle, BoxShape, NotchCorner, Placement,
    SupportCondition, SupportScene,
};

/// Image side length; every scene lives on a 24x24 grid.
pub const IMG: usize = 24;

/// Rejection-sampling budget shared by all generators.
pub const GEN_BUDGET: usize = 10_000;

/// Channel-separated binary occupancy image. Physics tasks use three
/// channels (floor, moving object / box, screen / platform); numerosity
/// scenes render to a single channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            data: vec![0; channels * IMG * IMG],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn at(&self, ch: usize, row: usize, col: usize) -> u8 {
        self.data[(ch * IMG + row) * IMG + col]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, row: usize, col: usize) {
        self.data[(ch * IMG + row) * IMG + col] = 1;
    }

    #[inline]
    pub fn clear(&mut self, ch: usize, row: usize, col: usize) {
        self.data[(ch * IMG + row) * IMG + col] = 0;
    }

    /// Fills the half-open box rows x cols in one channel.
    pub fn fill_rect(
        &mut self,
        ch: usize,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) {
        for r in rows {
            for c in cols.clone() {
                self.set(ch, r, c);
            }
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn count_set(&self, ch: usize) -> usize {
        self.data[ch * IMG * IMG..(ch + 1) * IMG * IMG]
            .iter()
            .filter(|&&v| v == 1)
            .count()
    }
}
