//! Shared oracles for the integration and acceptance suites. Everything
//! here is an independent route: numerical quadrature for the KL closed
//! forms, analytic moments for the sampling paths.

#![allow(dead_code)]

use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.8378770664093453;

/// Composite Simpson over t in [-10, 10].
fn simpson(f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, n) = (-10.0f64, 10.0f64, 20_000usize);
    let h = (hi - lo) / n as f64;
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        let t = lo + i as f64 * h;
        sum += f(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn phi(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// KL( N(mu, var) || N(0,1) ) by quadrature over x = mu + sigma t.
pub fn kl_gaussian_quad(mu: f64, var: f64) -> f64 {
    let sigma = var.sqrt();
    simpson(|t| {
        let x = mu + sigma * t;
        let ln_q = -0.5 * (LN_2PI + var.ln()) - 0.5 * t * t;
        let ln_p = -0.5 * LN_2PI - 0.5 * x * x;
        phi(t) * (ln_q - ln_p)
    })
}

/// KL( LogNormal(mu, sigma) || Gamma(a, theta) ) by quadrature over
/// ln x = mu + sigma t.
pub fn kl_lognormal_gamma_quad(mu: f64, sigma: f64, a: f64, theta: f64) -> f64 {
    simpson(|t| {
        let ln_x = mu + sigma * t;
        let ln_q = -ln_x - sigma.ln() - 0.5 * LN_2PI - 0.5 * t * t;
        let ln_p = (a - 1.0) * ln_x - ln_x.exp() / theta - ln_gamma(a) - a * theta.ln();
        phi(t) * (ln_q - ln_p)
    })
}

/// KL( LogNormal(mu, sigma) || InvGamma(a, b) ) by quadrature.
pub fn kl_lognormal_invgamma_quad(mu: f64, sigma: f64, a: f64, b: f64) -> f64 {
    simpson(|t| {
        let ln_x = mu + sigma * t;
        let ln_q = -ln_x - sigma.ln() - 0.5 * LN_2PI - 0.5 * t * t;
        let ln_p = a * b.ln() - ln_gamma(a) - (a + 1.0) * ln_x - b * (-ln_x).exp();
        phi(t) * (ln_q - ln_p)
    })
}

/// Streaming raw-moment accumulator for the Monte-Carlo moment tests.
#[derive(Default, Clone)]
pub struct Moments {
    pub n: f64,
    sum: f64,
    sum2: f64,
    sum3: f64,
    sum4: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum2 += v * v;
        self.sum3 += v * v * v;
        self.sum4 += v * v * v * v;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n
    }

    pub fn var(&self) -> f64 {
        self.sum2 / self.n - self.mean() * self.mean()
    }

    /// Standard error of the sample mean.
    pub fn se_mean(&self) -> f64 {
        (self.var() / self.n).sqrt()
    }

    /// Standard error of the sample variance, via the central fourth
    /// moment: SE = sqrt((c4 - var^2) / n).
    pub fn se_var(&self) -> f64 {
        let m = self.mean();
        let (r2, r3, r4) = (self.sum2 / self.n, self.sum3 / self.n, self.sum4 / self.n);
        let c4 = r4 - 4.0 * m * r3 + 6.0 * m * m * r2 - 3.0 * m.powi(4);
        let v = self.var();
        ((c4 - v * v).max(0.0) / self.n).sqrt()
    }
}
