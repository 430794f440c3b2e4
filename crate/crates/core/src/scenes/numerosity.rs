//! Numerosity scenes: 1 to 10 non-overlapping squares with sides from
//! {1, 2, 3}. Pairs differ in count by exactly one and are matched in
//! total pixel area so that summed area is not predictive of count.

use super::{Image, GEN_BUDGET, IMG};
use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Square {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumerosityScene {
    pub squares: Vec<Square>,
}

impl NumerosityScene {
    pub fn count(&self) -> usize {
        self.squares.len()
    }

    pub fn total_area(&self) -> usize {
        self.squares.iter().map(|s| s.side * s.side).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ok = (1..=10).contains(&self.count());
        for (i, a) in self.squares.iter().enumerate() {
            ok &= (1..=3).contains(&a.side) && a.x + a.side <= IMG && a.y + a.side <= IMG;
            for b in &self.squares[i + 1..] {
                ok &= !squares_overlap(a, b);
            }
        }
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                op: "numerosity_scene",
                msg: format!("invalid scene {self:?}"),
            })
        }
    }

    /// Single-channel occupancy image.
    pub fn render(&self) -> Image {
        let mut img = Image::new(1);
        for s in &self.squares {
            img.fill_rect(0, s.y..s.y + s.side, s.x..s.x + s.side);
        }
        img
    }
}

fn squares_overlap(a: &Square, b: &Square) -> bool {
    a.x < b.x + b.side && b.x < a.x + a.side && a.y < b.y + b.side && b.y < a.y + a.side
}

/// Places the given sides at random non-overlapping positions; squares may
/// touch edge to edge.
fn place(sides: &[usize], rng: &mut impl Rng, attempts: &mut usize) -> Result<NumerosityScene> {
    'outer: while *attempts < GEN_BUDGET {
        *attempts += 1;
        let mut squares: Vec<Square> = Vec::with_capacity(sides.len());
        for &side in sides {
            let mut placed = false;
            for _ in 0..100 {
                let sq = Square {
                    x: rng.gen_range(0..=IMG - side),
                    y: rng.gen_range(0..=IMG - side),
                    side,
                };
                if squares.iter().all(|other| !squares_overlap(&sq, other)) {
                    squares.push(sq);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'outer;
            }
        }
        return Ok(NumerosityScene { squares });
    }
    Err(Error::Generation {
        what: format!("numerosity placement of {} squares", sides.len()),
        attempts: GEN_BUDGET,
    })
}

fn draw_sides(count: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..count).map(|_| rng.gen_range(1..=3usize)).collect()
}

fn total_area(sides: &[usize]) -> i64 {
    sides.iter().map(|&s| (s * s) as i64).sum()
}

/// Smallest/largest total area reachable with `count` sides from {1,2,3}.
fn area_range(count: usize) -> (i64, i64) {
    (count as i64, 9 * count as i64)
}

/// Draws size multisets for the two counts with total areas within +-2
/// pixels of each other. Which count anchors the match is randomized so
/// the expected area difference vanishes rather than inheriting the
/// lattice tilt of a fixed anchor.
fn matched_sides(
    larger: usize,
    smaller: usize,
    rng: &mut impl Rng,
    attempts: &mut usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    while *attempts < GEN_BUDGET {
        let anchor_larger = rng.gen::<bool>();
        let (anchor_count, match_count) = if anchor_larger {
            (larger, smaller)
        } else {
            (smaller, larger)
        };
        *attempts += 1;
        let anchor = draw_sides(anchor_count, rng);
        let target = total_area(&anchor);
        let (lo, hi) = area_range(match_count);
        if target + 2 < lo || target - 2 > hi {
            continue; // no matching multiset exists; redraw the anchor
        }
        for _ in 0..200 {
            *attempts += 1;
            let candidate = draw_sides(match_count, rng);
            if (total_area(&candidate) - target).abs() <= 2 {
                return Ok(if anchor_larger {
                    (anchor, candidate)
                } else {
                    (candidate, anchor)
                });
            }
        }
    }
    Err(Error::Generation {
        what: format!("area matching for counts {larger}:{smaller}"),
        attempts: GEN_BUDGET,
    })
}

/// Generates a pair with counts (n+1, n); `larger_first` fixes which scene
/// is returned first (callers that need exact position balance pass it
/// explicitly).
pub fn gen_numerosity_pair_ordered(
    n: usize,
    larger_first: bool,
    rng: &mut impl Rng,
) -> Result<(NumerosityScene, NumerosityScene)> {
    if !(1..=9).contains(&n) {
        return Err(Error::Domain {
            op: "gen_numerosity_pair",
            msg: format!("ratio denominator {n} outside 1..=9"),
        });
    }
    let mut attempts = 0;
    let (sides_large, sides_small) = matched_sides(n + 1, n, rng, &mut attempts)?;
    let scene_large = place(&sides_large, rng, &mut attempts)?;
    let scene_small = place(&sides_small, rng, &mut attempts)?;
    debug_assert!(scene_large.validate().is_ok() && scene_small.validate().is_ok());
    Ok(if larger_first {
        (scene_large, scene_small)
    } else {
        (scene_small, scene_large)
    })
}

/// Generates a pair with counts (n+1, n) in randomized order.
pub fn gen_numerosity_pair(
    n: usize,
    rng: &mut impl Rng,
) -> Result<(NumerosityScene, NumerosityScene)> {
    let larger_first = rng.gen::<bool>();
    gen_numerosity_pair_ordered(n, larger_first, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn counts_match_ratio() {
        let mut rng = substream(101, 0);
        let (a, b) = gen_numerosity_pair_ordered(1, true, &mut rng).unwrap();
        assert_eq!((a.count(), b.count()), (2, 1));
        let (a, b) = gen_numerosity_pair_ordered(9, false, &mut rng).unwrap();
        assert_eq!((a.count(), b.count()), (9, 10));
    }

    #[test]
    fn ratio_out_of_range_rejected() {
        let mut rng = substream(102, 0);
        assert!(gen_numerosity_pair(0, &mut rng).is_err());
        assert!(gen_numerosity_pair(10, &mut rng).is_err());
    }

    #[test]
    fn areas_match_within_two_pixels() {
        let mut rng = substream(103, 0);
        for n in 1..=9 {
            for _ in 0..100 {
                let (a, b) = gen_numerosity_pair(n, &mut rng).unwrap();
                let diff = a.total_area() as i64 - b.total_area() as i64;
                assert!(diff.abs() <= 2, "n = {n}: diff {diff}");
            }
        }
    }

    #[test]
    fn mean_area_difference_vanishes() {
        // larger-count minus smaller-count area, averaged over pairs drawn
        // across all ratios, within 4 standard errors of zero
        let mut rng = substream(104, 0);
        let mut diffs: Vec<f64> = Vec::new();
        for rep in 0..2000 {
            let n = 1 + rep % 9;
            let (first, second) = gen_numerosity_pair(n, &mut rng).unwrap();
            let (large, small) = if first.count() > second.count() {
                (&first, &second)
            } else {
                (&second, &first)
            };
            diffs.push(large.total_area() as f64 - small.total_area() as f64);
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var =
            diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (diffs.len() - 1) as f64;
        let se = (var / diffs.len() as f64).sqrt();
        assert!(mean.abs() <= 4.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn scenes_satisfy_invariants() {
        let mut rng = substream(105, 0);
        for n in [1, 5, 9] {
            for _ in 0..200 {
                let (a, b) = gen_numerosity_pair(n, &mut rng).unwrap();
                a.validate().unwrap();
                b.validate().unwrap();
            }
        }
    }

    #[test]
    fn render_area_equals_scene_area() {
        let mut rng = substream(106, 0);
        let (a, _) = gen_numerosity_pair(9, &mut rng).unwrap();
        let img = a.render();
        assert_eq!(img.count_set(0), a.total_area());

        let empty = NumerosityScene { squares: vec![] };
        assert_eq!(empty.render().count_set(0), 0);

        let one = NumerosityScene {
            squares: vec![Square { x: 5, y: 5, side: 2 }],
        };
        assert_eq!(one.render().count_set(0), 4);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_numerosity_pair(4, &mut substream(107, 3)).unwrap();
        let b = gen_numerosity_pair(4, &mut substream(107, 3)).unwrap();
        assert_eq!(a, b);
    }
}
