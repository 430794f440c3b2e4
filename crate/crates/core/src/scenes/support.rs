//! Support scenes: a box placed relative to a platform, labeled stable or
//! unstable. Ground truth comes from the contact type and the horizontal
//! center of mass of the box over the platform extent.

use super::{Image, GEN_BUDGET, IMG};
use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotchCorner {
    TopLeft,
    TopRight,
}

/// Box silhouette. The L-shape is an outer rectangle with a notch carved
/// from one of its top corners, so the footprint keeps the full width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxShape {
    Rect {
        w: usize,
        h: usize,
    },
    LShape {
        w: usize,
        h: usize,
        notch_w: usize,
        notch_h: usize,
        corner: NotchCorner,
    },
}

impl BoxShape {
    pub fn width(&self) -> usize {
        match *self {
            BoxShape::Rect { w, .. } => w,
            BoxShape::LShape { w, .. } => w,
        }
    }

    pub fn height(&self) -> usize {
        match *self {
            BoxShape::Rect { h, .. } => h,
            BoxShape::LShape { h, .. } => h,
        }
    }

    pub fn area(&self) -> usize {
        match *self {
            BoxShape::Rect { w, h } => w * h,
            BoxShape::LShape {
                w,
                h,
                notch_w,
                notch_h,
                ..
            } => w * h - notch_w * notch_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Standing on the platform's top face.
    OnTop,
    /// Touching one of the platform's vertical edges, floating.
    SideContact,
    /// Floating with at least one pixel of clearance everywhere.
    OffNoContact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportCondition {
    /// Box fully on the platform vs. away from it.
    ContactVsOff,
    /// Box on top vs. touching the side.
    ContactType,
    /// Rectangular box partially on the platform.
    ContactAmount,
    /// L-shaped box partially on the platform.
    ShapeProportion,
}

impl SupportCondition {
    pub const ALL: [SupportCondition; 4] = [
        SupportCondition::ContactVsOff,
        SupportCondition::ContactType,
        SupportCondition::ContactAmount,
        SupportCondition::ShapeProportion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SupportCondition::ContactVsOff => "contact_vs_off",
            SupportCondition::ContactType => "contact_type",
            SupportCondition::ContactAmount => "contact_amount",
            SupportCondition::ShapeProportion => "shape_proportion",
        }
    }
}

/// One support scene. The box occupies rows
/// `[box_bottom - shape.height(), box_bottom)` and columns
/// `[box_x, box_x + shape.width())`; the platform stands on the floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportScene {
    pub floor_row: usize,
    pub plat_x: usize,
    pub plat_w: usize,
    pub plat_h: usize,
    pub shape: BoxShape,
    pub box_x: usize,
    pub box_bottom: usize,
    pub placement: Placement,
}

impl SupportScene {
    fn plat_top(&self) -> usize {
        self.floor_row - self.plat_h
    }

    pub fn validate(&self) -> Result<()> {
        let (bw, bh) = (self.shape.width(), self.shape.height());
        let mut ok = (18..=22).contains(&self.floor_row)
            && (6..=16).contains(&self.plat_w)
            && (6..=14).contains(&self.plat_h)
            && (2..=8).contains(&bw)
            && (2..=10).contains(&bh)
            && self.plat_x + self.plat_w <= IMG
            && self.box_x + bw <= IMG
            && self.box_bottom >= bh
            && self.box_bottom <= self.floor_row;
        if let BoxShape::LShape {
            w,
            h,
            notch_w,
            notch_h,
            ..
        } = self.shape
        {
            ok &= notch_w >= 1 && notch_w < w && notch_h >= 1 && notch_h < h;
        }
        ok &= match self.placement {
            Placement::OnTop => {
                self.box_bottom == self.plat_top()
                    && self.box_x < self.plat_x + self.plat_w
                    && self.box_x + bw > self.plat_x
            }
            Placement::SideContact => {
                let touches_left = self.box_x + bw == self.plat_x;
                let touches_right = self.plat_x + self.plat_w == self.box_x;
                let rows_overlap =
                    self.box_bottom > self.plat_top() && self.box_bottom - bh < self.floor_row;
                (touches_left || touches_right)
                    && rows_overlap
                    && self.box_bottom < self.floor_row
            }
            Placement::OffNoContact => {
                let x_sep = sep(self.box_x, self.box_x + bw, self.plat_x, self.plat_x + self.plat_w);
                let y_sep = sep(
                    self.box_bottom - bh,
                    self.box_bottom,
                    self.plat_top(),
                    self.floor_row,
                );
                (x_sep >= 1 || y_sep >= 1) && self.box_bottom < self.floor_row
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                op: "support_scene",
                msg: format!("invalid geometry {self:?}"),
            })
        }
    }

    /// Three channels: floor, box, platform.
    pub fn render(&self) -> Image {
        let mut img = Image::new(3);
        img.fill_rect(0, self.floor_row..self.floor_row + 1, 0..IMG);
        let (bw, bh) = (self.shape.width(), self.shape.height());
        let top = self.box_bottom - bh;
        img.fill_rect(1, top..self.box_bottom, self.box_x..self.box_x + bw);
        if let BoxShape::LShape {
            notch_w,
            notch_h,
            corner,
            ..
        } = self.shape
        {
            let (c0, c1) = match corner {
                NotchCorner::TopLeft => (self.box_x, self.box_x + notch_w),
                NotchCorner::TopRight => (self.box_x + bw - notch_w, self.box_x + bw),
            };
            for r in top..top + notch_h {
                for c in c0..c1 {
                    img.clear(1, r, c);
                }
            }
        }
        img.fill_rect(
            2,
            self.plat_top()..self.floor_row,
            self.plat_x..self.plat_x + self.plat_w,
        );
        img
    }
}

/// Gap between two half-open integer intervals; 0 when they touch or
/// overlap.
fn sep(a0: usize, a1: usize, b0: usize, b1: usize) -> usize {
    if b0 > a1 {
        b0 - a1
    } else if a0 > b1 {
        a0 - b1
    } else {
        0
    }
}

/// Area-weighted horizontal centroid of a shape placed with its left edge
/// at column `x`, in continuous pixel coordinates.
pub fn shape_centroid_x(shape: &BoxShape, x: usize) -> Result<f64> {
    if shape.area() == 0 {
        return Err(Error::Domain {
            op: "shape_centroid_x",
            msg: "empty shape".into(),
        });
    }
    Ok(match *shape {
        BoxShape::Rect { w, .. } => x as f64 + w as f64 / 2.0,
        BoxShape::LShape {
            w,
            h,
            notch_w,
            notch_h,
            corner,
        } => {
            let outer_area = (w * h) as f64;
            let notch_area = (notch_w * notch_h) as f64;
            let outer_cx = x as f64 + w as f64 / 2.0;
            let notch_cx = match corner {
                NotchCorner::TopLeft => x as f64 + notch_w as f64 / 2.0,
                NotchCorner::TopRight => (x + w) as f64 - notch_w as f64 / 2.0,
            };
            (outer_area * outer_cx - notch_area * notch_cx) / (outer_area - notch_area)
        }
    })
}

/// Stability rule: no contact and side contact are unstable; a box on top
/// is stable exactly when its horizontal center of mass lies within the
/// platform's extent (edges included).
pub fn stability_oracle(scene: &SupportScene) -> bool {
    match scene.placement {
        Placement::OffNoContact | Placement::SideContact => false,
        Placement::OnTop => {
            let cx = shape_centroid_x(&scene.shape, scene.box_x)
                .expect("scene shapes are never empty");
            cx >= scene.plat_x as f64 && cx <= (scene.plat_x + scene.plat_w) as f64
        }
    }
}

struct Base {
    floor_row: usize,
    plat_x: usize,
    plat_w: usize,
    plat_h: usize,
}

fn sample_base(rng: &mut impl Rng) -> Base {
    let floor_row = rng.gen_range(18..=22usize);
    let plat_w = rng.gen_range(6..=16usize);
    let plat_h = rng.gen_range(6..=14usize);
    let plat_x = rng.gen_range(0..=IMG - plat_w);
    Base {
        floor_row,
        plat_x,
        plat_w,
        plat_h,
    }
}

fn sample_rect(base: &Base, rng: &mut impl Rng) -> BoxShape {
    let w = rng.gen_range(2..=8usize);
    let h = rng.gen_range(2..=10.min(base.floor_row - base.plat_h));
    BoxShape::Rect { w, h }
}

fn sample_lshape(base: &Base, rng: &mut impl Rng) -> BoxShape {
    let w = rng.gen_range(2..=8usize);
    let h = rng.gen_range(2..=10.min(base.floor_row - base.plat_h));
    BoxShape::LShape {
        w,
        h,
        notch_w: rng.gen_range(1..w),
        notch_h: rng.gen_range(1..h),
        corner: if rng.gen::<bool>() {
            NotchCorner::TopLeft
        } else {
            NotchCorner::TopRight
        },
    }
}

/// Box standing fully on the platform: always stable.
fn place_fully_on(base: &Base, rng: &mut impl Rng) -> Option<SupportScene> {
    let w = rng.gen_range(2..=8.min(base.plat_w));
    let h = rng.gen_range(2..=10.min(base.floor_row - base.plat_h));
    let box_x = rng.gen_range(base.plat_x..=base.plat_x + base.plat_w - w);
    Some(SupportScene {
        floor_row: base.floor_row,
        plat_x: base.plat_x,
        plat_w: base.plat_w,
        plat_h: base.plat_h,
        shape: BoxShape::Rect { w, h },
        box_x,
        box_bottom: base.floor_row - base.plat_h,
        placement: Placement::OnTop,
    })
}

/// Box floating clear of both the platform and the floor.
fn place_off(base: &Base, rng: &mut impl Rng) -> Option<SupportScene> {
    let shape = sample_rect(base, rng);
    let (bw, bh) = (shape.width(), shape.height());
    if base.floor_row < bh + 1 {
        return None;
    }
    let box_x = rng.gen_range(0..=IMG - bw);
    let box_bottom = rng.gen_range(bh..=base.floor_row - 1);
    let x_sep = sep(box_x, box_x + bw, base.plat_x, base.plat_x + base.plat_w);
    let y_sep = sep(
        box_bottom - bh,
        box_bottom,
        base.floor_row - base.plat_h,
        base.floor_row,
    );
    if x_sep >= 1 || y_sep >= 1 {
        Some(SupportScene {
            floor_row: base.floor_row,
            plat_x: base.plat_x,
            plat_w: base.plat_w,
            plat_h: base.plat_h,
            shape,
            box_x,
            box_bottom,
            placement: Placement::OffNoContact,
        })
    } else {
        None
    }
}

/// Box held against a vertical edge of the platform, off the floor.
fn place_side(base: &Base, rng: &mut impl Rng) -> Option<SupportScene> {
    let shape = sample_rect(base, rng);
    let (bw, bh) = (shape.width(), shape.height());
    let left_ok = base.plat_x >= bw;
    let right_ok = base.plat_x + base.plat_w + bw <= IMG;
    let box_x = match (left_ok, right_ok) {
        (false, false) => return None,
        (true, false) => base.plat_x - bw,
        (false, true) => base.plat_x + base.plat_w,
        (true, true) => {
            if rng.gen::<bool>() {
                base.plat_x - bw
            } else {
                base.plat_x + base.plat_w
            }
        }
    };
    let plat_top = base.floor_row - base.plat_h;
    let lo = bh.max(plat_top + 1);
    let hi = base.floor_row - 1;
    if lo > hi {
        return None;
    }
    let box_bottom = rng.gen_range(lo..=hi);
    Some(SupportScene {
        floor_row: base.floor_row,
        plat_x: base.plat_x,
        plat_w: base.plat_w,
        plat_h: base.plat_h,
        shape,
        box_x,
        box_bottom,
        placement: Placement::SideContact,
    })
}

/// Box on top with a random overlap hanging off one side. The exact-tie
/// case (centroid precisely on the platform edge) is resampled so every
/// emitted label is unambiguous.
fn place_partial(base: &Base, shape: BoxShape, rng: &mut impl Rng) -> Option<SupportScene> {
    let bw = shape.width();
    let overlap = rng.gen_range(1..=bw.min(base.plat_w));
    let box_x = if rng.gen::<bool>() {
        // hanging off the right edge
        base.plat_x + base.plat_w - overlap
    } else {
        (base.plat_x + overlap).checked_sub(bw)?
    };
    if box_x + bw > IMG {
        return None;
    }
    let scene = SupportScene {
        floor_row: base.floor_row,
        plat_x: base.plat_x,
        plat_w: base.plat_w,
        plat_h: base.plat_h,
        shape,
        box_x,
        box_bottom: base.floor_row - base.plat_h,
        placement: Placement::OnTop,
    };
    let cx = shape_centroid_x(&shape, box_x).ok()?;
    if cx == base.plat_x as f64 || cx == (base.plat_x + base.plat_w) as f64 {
        return None; // exact tie
    }
    Some(scene)
}

/// Draws a random scene for the condition and returns it with its
/// stability label, rejection-sampling until `required` (if set) matches.
pub fn gen_support(
    condition: SupportCondition,
    required: Option<bool>,
    rng: &mut impl Rng,
) -> Result<(SupportScene, bool)> {
    for _ in 0..GEN_BUDGET {
        let base = sample_base(rng);
        let candidate = match condition {
            SupportCondition::ContactVsOff => {
                let stable = required.unwrap_or_else(|| rng.gen());
                if stable {
                    place_fully_on(&base, rng)
                } else {
                    place_off(&base, rng)
                }
            }
            SupportCondition::ContactType => {
                let stable = required.unwrap_or_else(|| rng.gen());
                if stable {
                    place_fully_on(&base, rng)
                } else {
                    place_side(&base, rng)
                }
            }
            SupportCondition::ContactAmount => {
                let shape = sample_rect(&base, rng);
                place_partial(&base, shape, rng)
            }
            SupportCondition::ShapeProportion => {
                let shape = sample_lshape(&base, rng);
                place_partial(&base, shape, rng)
            }
        };
        if let Some(scene) = candidate {
            let stable = stability_oracle(&scene);
            if required.is_none_or(|want| want == stable) {
                debug_assert!(scene.validate().is_ok(), "{scene:?}");
                return Ok((scene, stable));
            }
        }
    }
    Err(Error::Generation {
        what: format!("support {condition:?} with label {required:?}"),
        attempts: GEN_BUDGET,
    })
}
