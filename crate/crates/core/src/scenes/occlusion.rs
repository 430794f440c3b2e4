//! Occlusion scenes: a cylinder to the left of a screen, with part of the
//! screen removed. The target is whether the cylinder stays visible while
//! it passes behind the screen.

use super::{Image, GEN_BUDGET, IMG};
use crate::error::{Error, Result};
use rand::Rng;

/// Which part of the screen is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Removal {
    /// Intact screen (baseline condition).
    None,
    /// The entire screen body is gone; nothing of it is rendered.
    MiddleAll,
    /// The bottom `gap_h` rows are gone, so the screen hovers above the
    /// floor.
    Bottom { gap_h: usize },
    /// Everything above the lower connection is gone; `connection_h` rows
    /// remain standing on the floor.
    Top { connection_h: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcclusionCondition {
    Baseline,
    Middle,
    Bottom,
    Top,
}

impl OcclusionCondition {
    pub const ALL: [OcclusionCondition; 4] = [
        OcclusionCondition::Baseline,
        OcclusionCondition::Middle,
        OcclusionCondition::Bottom,
        OcclusionCondition::Top,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OcclusionCondition::Baseline => "baseline",
            OcclusionCondition::Middle => "middle",
            OcclusionCondition::Bottom => "bottom",
            OcclusionCondition::Top => "top",
        }
    }
}

/// Front-view geometry of one occlusion scene. Heights are measured in
/// rows above the floor line; objects stand on the floor, so an object of
/// height h occupies rows [floor_row - h, floor_row).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OcclusionScene {
    pub floor_row: usize,
    pub screen_x: usize,
    pub screen_w: usize,
    pub screen_h: usize,
    pub removal: Removal,
    pub cyl_x: usize,
    pub cyl_w: usize,
    pub cyl_h: usize,
}

impl OcclusionScene {
    /// Checks the type invariants; generators must only ever emit scenes
    /// that pass.
    pub fn validate(&self) -> Result<()> {
        let ok = (18..=22).contains(&self.floor_row)
            && (6..=16).contains(&self.screen_w)
            && (6..=14).contains(&self.screen_h)
            && (2..=8).contains(&self.cyl_w)
            && (2..=10).contains(&self.cyl_h)
            && self.cyl_h <= self.screen_h
            && self.screen_h <= self.floor_row
            && self.screen_x + self.screen_w <= IMG
            && self.cyl_x + self.cyl_w <= self.screen_x
            && match self.removal {
                Removal::None | Removal::MiddleAll => true,
                Removal::Bottom { gap_h } => gap_h >= 1 && gap_h < self.screen_h,
                Removal::Top { connection_h } => connection_h >= 1 && connection_h < self.screen_h,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                op: "occlusion_scene",
                msg: format!("invalid geometry {self:?}"),
            })
        }
    }

    /// Three channels: floor, cylinder, screen (with removed regions left
    /// empty).
    pub fn render(&self) -> Image {
        let mut img = Image::new(3);
        img.fill_rect(0, self.floor_row..self.floor_row + 1, 0..IMG);
        img.fill_rect(
            1,
            self.floor_row - self.cyl_h..self.floor_row,
            self.cyl_x..self.cyl_x + self.cyl_w,
        );
        let cols = self.screen_x..self.screen_x + self.screen_w;
        let top = self.floor_row - self.screen_h;
        match self.removal {
            Removal::None => img.fill_rect(2, top..self.floor_row, cols),
            Removal::MiddleAll => {}
            Removal::Bottom { gap_h } => img.fill_rect(2, top..self.floor_row - gap_h, cols),
            Removal::Top { connection_h } => {
                img.fill_rect(2, self.floor_row - connection_h..self.floor_row, cols)
            }
        }
        img
    }
}

/// Whether the cylinder is seen at some point while travelling behind the
/// screen. With the top removed, it shows exactly when it is taller than
/// the remaining lower connection; an intact screen always hides it (the
/// cylinder is never taller than the screen).
pub fn occlusion_visibility_oracle(scene: &OcclusionScene) -> bool {
    match scene.removal {
        Removal::None => false,
        Removal::MiddleAll => true,
        Removal::Bottom { .. } => true,
        Removal::Top { connection_h } => scene.cyl_h > connection_h,
    }
}

fn sample_scene(condition: OcclusionCondition, rng: &mut impl Rng) -> OcclusionScene {
    let floor_row = rng.gen_range(18..=22usize);
    let screen_w = rng.gen_range(6..=16usize);
    let screen_h = rng.gen_range(6..=14usize);
    let cyl_w = rng.gen_range(2..=8usize);
    let cyl_h = rng.gen_range(2..=10.min(screen_h));
    let screen_x = rng.gen_range(cyl_w..=IMG - screen_w);
    let cyl_x = rng.gen_range(0..=screen_x - cyl_w);
    let removal = match condition {
        OcclusionCondition::Baseline => Removal::None,
        OcclusionCondition::Middle => Removal::MiddleAll,
        OcclusionCondition::Bottom => Removal::Bottom {
            gap_h: rng.gen_range(1..screen_h),
        },
        OcclusionCondition::Top => Removal::Top {
            connection_h: rng.gen_range(1..screen_h),
        },
    };
    OcclusionScene {
        floor_row,
        screen_x,
        screen_w,
        screen_h,
        removal,
        cyl_x,
        cyl_w,
        cyl_h,
    }
}

/// Draws a random scene for the condition and returns it with its
/// visibility label. With `required` set, rejection-samples until the
/// oracle agrees (used to balance the top-removed condition).
pub fn gen_occlusion(
    condition: OcclusionCondition,
    required: Option<bool>,
    rng: &mut impl Rng,
) -> Result<(OcclusionScene, bool)> {
    for _ in 0..GEN_BUDGET {
        let scene = sample_scene(condition, rng);
        let visible = occlusion_visibility_oracle(&scene);
        if required.is_none_or(|want| want == visible) {
            debug_assert!(scene.validate().is_ok());
            return Ok((scene, visible));
        }
    }
    Err(Error::Generation {
        what: format!("occlusion {condition:?} with label {required:?}"),
        attempts: GEN_BUDGET,
    })
}
