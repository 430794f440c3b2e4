//! Least-squares fit of y = A * exp(-b x) + d.
//!
//! The decay rate b is found by a log-spaced grid search (plus b = 0)
//! with the linear subproblem for (A, d) solved in closed form per
//! candidate, then refined by golden-section search around the best grid
//! point.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub amplitude: f64,
    pub rate: f64,
    pub asymptote: f64,
    pub r_squared: f64,
}

impl ExponentialFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (-self.rate * x).exp() + self.asymptote
    }
}

/// Residual sum of squares and (A, d) for a fixed rate.
fn solve_linear(xs: &[f64], ys: &[f64], b: f64) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    if b == 0.0 {
        // e^0 column is collinear with the intercept: constant-mean fit
        let mean = ys.iter().sum::<f64>() / n;
        let sse = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
        return (0.0, mean, sse);
    }
    let es: Vec<f64> = xs.iter().map(|&x| (-b * x).exp()).collect();
    let se: f64 = es.iter().sum();
    let see: f64 = es.iter().map(|e| e * e).sum();
    let sy: f64 = ys.iter().sum();
    let sey: f64 = es.iter().zip(ys).map(|(e, y)| e * y).sum();
    let det = see * n - se * se;
    if det.abs() < 1e-300 {
        let mean = sy / n;
        let sse = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
        return (0.0, mean, sse);
    }
    let a = (sey * n - se * sy) / det;
    let d = (see * sy - se * sey) / det;
    let sse = es
        .iter()
        .zip(ys)
        .map(|(e, y)| {
            let r = y - (a * e + d);
            r * r
        })
        .sum();
    (a, d, sse)
}

/// Fits y = A e^(-bx) + d by least squares over x-sorted data.
///
/// Degenerate (constant) targets return A = 0, b = 0, d = mean and an
/// R-squared of 0.
pub fn fit_exponential(xs: &[f64], ys: &[f64]) -> Result<ExponentialFit> {
    if xs.len() != ys.len() || xs.len() < 4 {
        return Err(Error::Domain {
            op: "fit_exponential",
            msg: format!("need >= 4 paired points, got {} and {}", xs.len(), ys.len()),
        });
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain {
            op: "fit_exponential",
            msg: "xs must be strictly increasing".into(),
        });
    }
    let n = xs.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let sst: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    if sst == 0.0 || ys.windows(2).all(|w| w[0] == w[1]) {
        return Ok(ExponentialFit {
            amplitude: 0.0,
            rate: 0.0,
            asymptote: ys[0],
            r_squared: 0.0,
        });
    }

    let span = xs[xs.len() - 1] - xs[0];
    // 200 log-spaced rates with b * span covering 1e-3 .. 1e3, plus b = 0
    let mut grid = vec![0.0];
    for i in 0..200 {
        let t = i as f64 / 199.0;
        let b_span = 1e-3 * (1e6f64).powf(t);
        grid.push(b_span / span);
    }
    let mut best = (f64::INFINITY, 0usize);
    for (i, &b) in grid.iter().enumerate() {
        let (_, _, sse) = solve_linear(xs, ys, b);
        if sse < best.0 {
            best = (sse, i);
        }
    }

    // golden-section refinement between the neighbors of the best point
    let lo = if best.1 == 0 { 0.0 } else { grid[best.1 - 1] };
    let hi = if best.1 + 1 < grid.len() {
        grid[best.1 + 1]
    } else {
        grid[best.1] * 2.0
    };
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b_hi) = (lo, hi);
    let mut x1 = b_hi - phi * (b_hi - a);
    let mut x2 = a + phi * (b_hi - a);
    let mut f1 = solve_linear(xs, ys, x1).2;
    let mut f2 = solve_linear(xs, ys, x2).2;
    for _ in 0..120 {
        if f1 <= f2 {
            b_hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = b_hi - phi * (b_hi - a);
            f1 = solve_linear(xs, ys, x1).2;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b_hi - a);
            f2 = solve_linear(xs, ys, x2).2;
        }
    }
    let b_refined = 0.5 * (a + b_hi);
    let candidates = [grid[best.1], b_refined];
    let mut final_fit = (f64::INFINITY, 0.0, 0.0, 0.0);
    for &b in &candidates {
        let (amp, d, sse) = solve_linear(xs, ys, b);
        if sse < final_fit.0 {
            final_fit = (sse, b, amp, d);
        }
    }
    let (sse, rate, amplitude, asymptote) = final_fit;
    Ok(ExponentialFit {
        amplitude,
        rate,
        asymptote,
        r_squared: 1.0 - sse / sst,
    })
}
