//! Finite-difference validation of tape gradients.

use super::matrix::Matrix;
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::rng::substream;
use rand::seq::index::sample;

/// Coordinates checked per parameter; larger parameters get a seeded
/// random subset.
const MAX_COORDS_PER_PARAM: usize = 256;

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences and returns the worst deviation.
///
/// `build` must construct the loss graph deterministically from the leaf
/// nodes it is given (any sampling noise has to be captured outside and
/// reused). The deviation per coordinate is
/// `|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`, i.e. relative for large
/// gradients and absolute near zero, so a constant loss reports exactly 0.
pub fn gradient_check<F>(build: F, params: &[Matrix], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    if !(1e-6..=1e-4).contains(&h) {
        return Err(Error::Domain {
            op: "gradient_check",
            msg: format!("step {h} outside [1e-6, 1e-4]"),
        });
    }

    let eval = |ps: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let root = build(&mut tape, &ids);
        let value = tape.value(root).at(0, 0);
        if !value.is_finite() {
            return Err(Error::Numeric {
                op: "gradient_check",
                msg: format!("loss is {value}"),
            });
        }
        Ok(value)
    };

    // Reverse-mode gradients at the base point.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let root = build(&mut tape, &ids);
    let base = tape.value(root).at(0, 0);
    if !base.is_finite() {
        return Err(Error::Numeric {
            op: "gradient_check",
            msg: format!("loss is {base}"),
        });
    }
    tape.backward(root);
    let grads: Vec<Matrix> = ids.iter().map(|&id| tape.grad(id).clone()).collect();

    let mut rng = substream(0x6f7261636c65, 0);
    let mut worst = 0.0f64;
    let mut work: Vec<Matrix> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let coords: Vec<usize> = if p.len() <= MAX_COORDS_PER_PARAM {
            (0..p.len()).collect()
        } else {
            sample(&mut rng, p.len(), MAX_COORDS_PER_PARAM).into_vec()
        };
        for c in coords {
            let orig = work[pi].data()[c];
            work[pi].data_mut()[c] = orig + h;
            let plus = eval(&work)?;
            work[pi].data_mut()[c] = orig - h;
            let minus = eval(&work)?;
            work[pi].data_mut()[c] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let ad = grads[pi].data()[c];
            let dev = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0);
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_is_exact() {
        // f(w) = w^2 at w = 3: analytic gradient 6.
        let p = [Matrix::scalar(3.0)];
        let err = gradient_check(
            |tape, ids| {
                let sq = tape.square(ids[0]);
                tape.sum_all(sq)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "deviation {err}");
    }

    #[test]
    fn constant_loss_reports_zero() {
        let p = [Matrix::scalar(2.0)];
        let err = gradient_check(
            |tape, ids| {
                let z = tape.scale(ids[0], 0.0);
                tape.sum_all(z)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn three_layer_elu_network() {
        use crate::rng::substream;
        let mut rng = substream(21, 0);
        let x = Matrix::randn(4, 5, 0.0, 1.0, &mut rng);
        let w1 = Matrix::randn(5, 6, 0.0, 0.5, &mut rng);
        let w2 = Matrix::randn(6, 6, 0.0, 0.5, &mut rng);
        let w3 = Matrix::randn(6, 1, 0.0, 0.5, &mut rng);
        let err = gradient_check(
            |tape, ids| {
                let xn = tape.leaf(x.clone());
                let h1 = tape.matmul(xn, ids[0]);
                let h1 = tape.elu(h1);
                let h2 = tape.matmul(h1, ids[1]);
                let h2 = tape.elu(h2);
                let out = tape.matmul(h2, ids[2]);
                let sq = tape.square(out);
                tape.sum_all(sq)
            },
            &[w1, w2, w3],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "deviation {err}");
    }

    #[test]
    fn fused_gaussian_kl_gradients() {
        use crate::rng::substream;
        let mut rng = substream(22, 0);
        let mu = Matrix::randn(3, 4, 0.0, 1.0, &mut rng);
        let rho = Matrix::randn(3, 4, -1.0, 0.5, &mut rng);
        let err = gradient_check(
            |tape, ids| {
                let var = tape.exp(ids[1]);
                tape.gaussian_kl(ids[0], ids[1], var)
            },
            &[mu.clone(), rho.clone()],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "deviation {err}");

        // value agrees with the unfused composition
        let mut tape = Tape::new();
        let m = tape.leaf(mu);
        let r = tape.leaf(rho);
        let v = tape.exp(r);
        let fused = tape.gaussian_kl(m, r, v);
        let sq = tape.square(m);
        let a = tape.add(sq, v);
        let b = tape.sub(a, r);
        let c = tape.add_scalar(b, -1.0);
        let s = tape.sum_all(c);
        let unfused = tape.scale(s, 0.5);
        let diff = (tape.value(fused).at(0, 0) - tape.value(unfused).at(0, 0)).abs();
        assert!(diff < 1e-12 * tape.value(fused).at(0, 0).abs().max(1.0));
    }

    #[test]
    fn fused_lognormal_rows_gradients() {
        use crate::rng::substream;
        let mut rng = substream(23, 0);
        let loc = Matrix::randn(1, 5, 0.0, 0.5, &mut rng);
        let sd = Matrix::randn(1, 5, 0.0, 0.2, &mut rng).map(|v| v.abs() + 0.1);
        let eps = Matrix::randn(4, 5, 0.0, 1.0, &mut rng);
        let err = gradient_check(
            |tape, ids| {
                let e = tape.leaf(eps.clone());
                let z = tape.lognormal_rows(ids[0], ids[1], e);
                let sq = tape.square(z);
                tape.sum_all(sq)
            },
            &[loc, sd],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "deviation {err}");
    }

    #[test]
    fn step_outside_bounds_rejected() {
        let p = [Matrix::scalar(1.0)];
        let r = gradient_check(|tape, ids| tape.sum_all(ids[0]), &p, 1e-2);
        assert!(r.is_err());
    }
}
