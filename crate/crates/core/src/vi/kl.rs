//! Closed-form KL divergences used by the horseshoe layer.
//!
//! All three terms are KL(q || p) in nats for the factorized posterior:
//! a Gaussian weight posterior against the standard-normal prior, and
//! log-normal posteriors against the Gamma / inverse-Gamma auxiliaries of
//! the half-Cauchy scale decomposition. Gamma and inverse-Gamma are
//! parameterized by shape and *scale*.

use crate::error::{Error, Result};
use statrs::function::gamma::ln_gamma;

/// Variances below this are clamped before taking logs, so numerically
/// degenerate posteriors report a large finite KL instead of infinity.
pub const VARIANCE_FLOOR: f64 = 1e-12;

fn ln_2pi_e() -> f64 {
    (2.0 * std::f64::consts::PI).ln() + 1.0
}

/// KL( N(mu, var) || N(0, 1) ) = (mu^2 + var - ln var - 1) / 2.
pub fn kl_gaussian_std(mu: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) || !mu.is_finite() || !var.is_finite() {
        return Err(Error::Domain {
            op: "kl_gaussian_std",
            msg: format!("requires var > 0, got mu = {mu}, var = {var}"),
        });
    }
    let var = var.max(VARIANCE_FLOOR);
    Ok(0.5 * (mu * mu + var - var.ln() - 1.0))
}

/// KL( LogNormal(mu, sigma) || Gamma(shape a, scale theta) ).
pub fn kl_lognormal_gamma(mu: f64, sigma: f64, a: f64, theta: f64) -> Result<f64> {
    if !(sigma > 0.0 && a > 0.0 && theta > 0.0) || !mu.is_finite() {
        return Err(Error::Domain {
            op: "kl_lognormal_gamma",
            msg: format!("requires sigma, a, theta > 0, got ({mu}, {sigma}, {a}, {theta})"),
        });
    }
    let var = (sigma * sigma).max(VARIANCE_FLOOR);
    Ok(-mu - 0.5 * (ln_2pi_e() + var.ln()) + a * theta.ln() + ln_gamma(a) - (a - 1.0) * mu
        + (mu + 0.5 * var).exp() / theta)
}

/// KL( LogNormal(mu, sigma) || InvGamma(shape a, scale b) ).
pub fn kl_lognormal_invgamma(mu: f64, sigma: f64, a: f64, b: f64) -> Result<f64> {
    if !(sigma > 0.0 && a > 0.0 && b > 0.0) || !mu.is_finite() {
        return Err(Error::Domain {
            op: "kl_lognormal_invgamma",
            msg: format!("requires sigma, a, b > 0, got ({mu}, {sigma}, {a}, {b})"),
        });
    }
    let var = (sigma * sigma).max(VARIANCE_FLOOR);
    Ok(-mu - 0.5 * (ln_2pi_e() + var.ln()) - a * b.ln() + ln_gamma(a) + (a + 1.0) * mu
        + b * (-mu + 0.5 * var).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn gaussian_matched_posterior_is_zero() {
        assert_eq!(kl_gaussian_std(0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_unit_shift_is_half() {
        assert!((kl_gaussian_std(1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_wide_posterior_closed_form() {
        // (0, 4): 0.5 * (4 - ln 4 - 1); quadrature cross-check lives in the
        // integration suite.
        let expect = 0.5 * (4.0 - 4.0f64.ln() - 1.0);
        assert!((kl_gaussian_std(0.0, 4.0).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.806_852_819_440_054_7).abs() < 1e-12);
    }

    #[test]
    fn lognormal_gamma_reference_point() {
        // (0, 1, 1/2, 1): -ln(2 pi e)/2 + ln Gamma(1/2) + e^(1/2),
        // frozen from the quadrature oracle.
        let got = kl_lognormal_gamma(0.0, 1.0, 0.5, 1.0).unwrap();
        assert!((got - 0.802_147_680_420_155_5).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn reciprocal_symmetry_of_lognormal() {
        // x ~ LogNormal(mu, s)  <=>  1/x ~ LogNormal(-mu, s), and
        // InvGamma(a, b) is the law of 1/y for y ~ Gamma(a, 1/b); with
        // theta = b = 1 the two KLs coincide under mu -> -mu.
        let a = kl_lognormal_invgamma(0.3, 0.8, 0.5, 1.0).unwrap();
        let b = kl_lognormal_gamma(-0.3, 0.8, 0.5, 1.0).unwrap();
        assert!((a - b).abs() < 1e-12);

        let a = kl_lognormal_invgamma(0.0, 1.0, 0.5, 1.0).unwrap();
        let b = kl_lognormal_gamma(0.0, 1.0, 0.5, 1.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn nonnegativity_on_random_grid() {
        let mut rng = substream(31, 0);
        for _ in 0..1000 {
            let mu = rng.gen_range(-3.0..3.0);
            let sigma = rng.gen_range(0.05..2.5);
            let a = rng.gen_range(0.1..4.0);
            let s = rng.gen_range(0.05..8.0);
            assert!(kl_gaussian_std(mu, sigma * sigma).unwrap() >= 0.0);
            assert!(kl_lognormal_gamma(mu, sigma, a, s).unwrap() >= -1e-12);
            assert!(kl_lognormal_invgamma(mu, sigma, a, s).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn shrinking_sigma_diverges() {
        // As the posterior collapses to a point mass its differential
        // entropy goes to -inf, so the KL grows without bound (until the
        // variance floor caps it).
        let wide = kl_lognormal_gamma(0.5, 0.5, 0.5, 1.0).unwrap();
        let mid = kl_lognormal_gamma(0.5, 1e-3, 0.5, 1.0).unwrap();
        let tight = kl_lognormal_gamma(0.5, 1e-5, 0.5, 1.0).unwrap();
        assert!(mid > wide + 1.0);
        assert!(tight > mid + 1.0);
    }

    #[test]
    fn domain_violations_are_errors() {
        assert!(kl_gaussian_std(0.0, 0.0).is_err());
        assert!(kl_gaussian_std(0.0, -1.0).is_err());
        assert!(kl_lognormal_gamma(0.0, 0.0, 0.5, 1.0).is_err());
        assert!(kl_lognormal_gamma(0.0, 1.0, -0.5, 1.0).is_err());
        assert!(kl_lognormal_invgamma(0.0, 1.0, 0.5, 0.0).is_err());
    }
}
