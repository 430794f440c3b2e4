//! Variational Bayesian linear layer with a group horseshoe prior.
//!
//! The prior on a layer with D input units (bias included) and K outputs:
//!
//! ```text
//! s ~ C+(0, tau0)        one global scale per layer
//! z_i ~ C+(0, 1)         one scale per input unit i
//! w~_ij ~ N(0, 1)        standardized weights
//! w_ij = w~_ij * z_i * s
//! ```
//!
//! Each half-Cauchy scale x is decomposed as x^2 = alpha * beta with
//! alpha ~ Gamma(1/2, tau^2) and beta ~ InvGamma(1/2, 1) (shape/scale),
//! and the posterior over every ln alpha, ln beta is Gaussian. The scale
//! x = sqrt(alpha beta) is then log-normal with location
//! (mu_a + mu_b) / 2 and variance (var_a + var_b) / 4.

use super::kl::{kl_gaussian_std, kl_lognormal_gamma, kl_lognormal_invgamma};
use crate::error::{Error, Result};
use crate::nn::{Matrix, NodeId, Tape};
use rand::Rng;

/// Factorized Gaussian posterior over a matrix of standardized weights.
/// `log_var` stores ln(sigma^2), so the variance is positive by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Matrix,
    pub log_var: Matrix,
}

/// Elementwise log-normal posterior over a vector of positive scale
/// variables: each ln x is N(loc, exp(log_var)).
#[derive(Debug, Clone, PartialEq)]
pub struct LogNormalPosterior {
    pub loc: Matrix,
    pub log_var: Matrix,
}

impl LogNormalPosterior {
    fn constant(rows: usize, cols: usize, loc: f64, log_var: f64) -> Self {
        Self {
            loc: Matrix::filled(rows, cols, loc),
            log_var: Matrix::filled(rows, cols, log_var),
        }
    }
}

/// Number of parameter matrices per layer, in declaration order.
pub const PARAMS_PER_LAYER: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeLayer {
    /// D x K posterior over standardized weights.
    pub weights: GaussianPosterior,
    /// 1 x D posteriors over the Gamma auxiliaries of the unit scales.
    pub unit_alpha: LogNormalPosterior,
    /// 1 x D posteriors over the InvGamma auxiliaries of the unit scales.
    pub unit_beta: LogNormalPosterior,
    /// 1 x 1 posterior over the Gamma auxiliary of the global scale.
    pub global_alpha: LogNormalPosterior,
    /// 1 x 1 posterior over the InvGamma auxiliary of the global scale.
    pub global_beta: LogNormalPosterior,
    /// Prior sparsity of the global scale: s ~ C+(0, tau0).
    pub tau0: f64,
}

/// Noise for one sampled pass through a layer. Kept outside the graph so
/// a fixed draw can be replayed (finite-difference checks, determinism).
pub struct LayerNoise {
    pub eps_unit: Matrix,
    pub eps_global: Matrix,
    pub eps_pre: Matrix,
}

impl LayerNoise {
    /// Draws in a fixed order: unit scales, global scale, pre-activation.
    pub fn sample(batch: usize, d: usize, k: usize, rng: &mut impl Rng) -> Self {
        let mut eps_unit = Matrix::zeros(batch, d);
        let mut eps_global = Matrix::zeros(batch, 1);
        let mut eps_pre = Matrix::zeros(batch, k);
        eps_unit.fill_standard_normal(rng);
        eps_global.fill_standard_normal(rng);
        eps_pre.fill_standard_normal(rng);
        Self {
            eps_unit,
            eps_global,
            eps_pre,
        }
    }
}

impl HorseshoeLayer {
    /// `d_in` counts the bias unit. Weight means are fan-in initialized,
    /// weight log-variances start at ln(1e-4); scale posteriors start with
    /// E[z_i] ~ 1 and E[s] ~ tau0 (the Gamma auxiliary absorbs tau0^2, its
    /// inverse-Gamma partner stays at unit scale) with log-variances
    /// ln(1e-2).
    pub fn init(d_in: usize, k_out: usize, tau0: f64, rng: &mut impl Rng) -> Self {
        let std = (1.0 / d_in as f64).sqrt();
        let aux_log_var = (1e-2f64).ln();
        // Log-normal mean correction so E[x] hits the target exactly:
        // E[x] = exp(loc + var_x / 2) with var_x = (var_a + var_b) / 4.
        let half_var_x = 0.5 * (2.0 * 1e-2 / 4.0);
        Self {
            weights: GaussianPosterior {
                mean: Matrix::randn(d_in, k_out, 0.0, std, rng),
                log_var: Matrix::filled(d_in, k_out, (1e-4f64).ln()),
            },
            unit_alpha: LogNormalPosterior::constant(1, d_in, -half_var_x, aux_log_var),
            unit_beta: LogNormalPosterior::constant(1, d_in, -half_var_x, aux_log_var),
            global_alpha: LogNormalPosterior::constant(
                1,
                1,
                2.0 * tau0.ln() - half_var_x,
                aux_log_var,
            ),
            global_beta: LogNormalPosterior::constant(1, 1, -half_var_x, aux_log_var),
            tau0,
        }
    }

    /// Input dimension, bias unit included.
    pub fn d_in(&self) -> usize {
        self.weights.mean.rows()
    }

    pub fn k_out(&self) -> usize {
        self.weights.mean.cols()
    }

    /// Parameter matrices in declaration order (the checkpoint layout).
    pub fn params(&self) -> [&Matrix; PARAMS_PER_LAYER] {
        [
            &self.weights.mean,
            &self.weights.log_var,
            &self.unit_alpha.loc,
            &self.unit_alpha.log_var,
            &self.unit_beta.loc,
            &self.unit_beta.log_var,
            &self.global_alpha.loc,
            &self.global_alpha.log_var,
            &self.global_beta.loc,
            &self.global_beta.log_var,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Matrix; PARAMS_PER_LAYER] {
        [
            &mut self.weights.mean,
            &mut self.weights.log_var,
            &mut self.unit_alpha.loc,
            &mut self.unit_alpha.log_var,
            &mut self.unit_beta.loc,
            &mut self.unit_beta.log_var,
            &mut self.global_alpha.loc,
            &mut self.global_alpha.log_var,
            &mut self.global_beta.loc,
            &mut self.global_beta.log_var,
        ]
    }

    /// Total KL from the layer's factorized posterior to the prior.
    pub fn kl(&self) -> Result<f64> {
        let mut total = 0.0;
        let mean = self.weights.mean.data();
        let log_var = self.weights.log_var.data();
        for i in 0..mean.len() {
            total += kl_gaussian_std(mean[i], log_var[i].exp())?;
        }
        for i in 0..self.d_in() {
            total += kl_lognormal_gamma(
                self.unit_alpha.loc.data()[i],
                (0.5 * self.unit_alpha.log_var.data()[i]).exp(),
                0.5,
                1.0,
            )?;
            total += kl_lognormal_invgamma(
                self.unit_beta.loc.data()[i],
                (0.5 * self.unit_beta.log_var.data()[i]).exp(),
                0.5,
                1.0,
            )?;
        }
        total += kl_lognormal_gamma(
            self.global_alpha.loc.at(0, 0),
            (0.5 * self.global_alpha.log_var.at(0, 0)).exp(),
            0.5,
            self.tau0 * self.tau0,
        )?;
        total += kl_lognormal_invgamma(
            self.global_beta.loc.at(0, 0),
            (0.5 * self.global_beta.log_var.at(0, 0)).exp(),
            0.5,
            1.0,
        )?;
        Ok(total)
    }
}

/// Tape handles for one layer's parameters, in declaration order.
#[derive(Clone, Copy)]
pub struct LayerNodes {
    pub w_mean: NodeId,
    pub w_log_var: NodeId,
    pub ua_loc: NodeId,
    pub ua_log_var: NodeId,
    pub ub_loc: NodeId,
    pub ub_log_var: NodeId,
    pub ga_loc: NodeId,
    pub ga_log_var: NodeId,
    pub gb_loc: NodeId,
    pub gb_log_var: NodeId,
}

impl LayerNodes {
    pub fn from_layer(tape: &mut Tape, layer: &HorseshoeLayer) -> Self {
        let p = layer.params();
        let ids: Vec<NodeId> = p.iter().map(|m| tape.leaf((*m).clone())).collect();
        Self::from_ids(&ids)
    }

    pub fn from_ids(ids: &[NodeId]) -> Self {
        assert_eq!(ids.len(), PARAMS_PER_LAYER);
        Self {
            w_mean: ids[0],
            w_log_var: ids[1],
            ua_loc: ids[2],
            ua_log_var: ids[3],
            ub_loc: ids[4],
            ub_log_var: ids[5],
            ga_loc: ids[6],
            ga_log_var: ids[7],
            gb_loc: ids[8],
            gb_log_var: ids[9],
        }
    }

    pub fn ids(&self) -> [NodeId; PARAMS_PER_LAYER] {
        [
            self.w_mean,
            self.w_log_var,
            self.ua_loc,
            self.ua_log_var,
            self.ub_loc,
            self.ub_log_var,
            self.ga_loc,
            self.ga_log_var,
            self.gb_loc,
            self.gb_log_var,
        ]
    }
}

/// Log-normal sample of a scale vector on the tape, broadcast over the
/// batch: exp(loc + sigma .* eps) with sigma = exp(log_var / 2) derived
/// from the two auxiliaries.
fn sample_scale(
    tape: &mut Tape,
    loc_a: NodeId,
    lv_a: NodeId,
    loc_b: NodeId,
    lv_b: NodeId,
    eps: &Matrix,
) -> NodeId {
    let loc_sum = tape.add(loc_a, loc_b);
    let loc = tape.scale(loc_sum, 0.5);
    let va = tape.exp(lv_a);
    let vb = tape.exp(lv_b);
    let var_sum = tape.add(va, vb);
    let var = tape.scale(var_sum, 0.25);
    let sd = tape.sqrt(var);
    let eps_n = tape.leaf(eps.clone());
    tape.lognormal_rows(loc, sd, eps_n)
}

/// Locally reparameterized pre-activation of one layer on the tape.
///
/// Per batch row: sample the unit scales z_i and the layer scale s from
/// their log-normal posteriors, scale the (bias-augmented) inputs, then
/// draw the pre-activation from N(x' mu_w, x'^2 sigma_w^2) elementwise.
/// `w_var` must be the `exp` of the layer's weight log-variance node
/// (shared with the KL graph so the big exp runs once per step).
pub fn preactivation_graph(
    tape: &mut Tape,
    x_aug: NodeId,
    nodes: &LayerNodes,
    w_var: NodeId,
    noise: &LayerNoise,
) -> NodeId {
    let (batch, d) = tape.value(x_aug).shape();
    let k = tape.value(nodes.w_mean).cols();
    assert_eq!(
        d,
        tape.value(nodes.w_mean).rows(),
        "preactivation: input dim {} does not match layer {}",
        d,
        tape.value(nodes.w_mean).rows()
    );
    assert_eq!(noise.eps_unit.shape(), (batch, d));
    assert_eq!(noise.eps_pre.shape(), (batch, k));

    let z = sample_scale(
        tape,
        nodes.ua_loc,
        nodes.ua_log_var,
        nodes.ub_loc,
        nodes.ub_log_var,
        &noise.eps_unit,
    );
    let s = sample_scale(
        tape,
        nodes.ga_loc,
        nodes.ga_log_var,
        nodes.gb_loc,
        nodes.gb_log_var,
        &noise.eps_global,
    );
    let s_b = tape.broadcast_cols(s, d);
    let xz = tape.mul(x_aug, z);
    let x_scaled = tape.mul(xz, s_b);

    let mean = tape.matmul(x_scaled, nodes.w_mean);
    let x_sq = tape.square(x_scaled);
    let var = tape.matmul(x_sq, w_var);
    let sd = tape.sqrt(var);
    let eps = tape.leaf(noise.eps_pre.clone());
    let fluct = tape.mul(sd, eps);
    tape.add(mean, fluct)
}

/// KL( LogNormal || Gamma(a, theta) ) summed over an elementwise posterior
/// vector, as a tape graph. Mirrors [`kl_lognormal_gamma`].
fn kl_lognormal_gamma_graph(
    tape: &mut Tape,
    loc: NodeId,
    log_var: NodeId,
    a: f64,
    theta: f64,
) -> NodeId {
    use statrs::function::gamma::ln_gamma;
    let ln_2pi_e = (2.0 * std::f64::consts::PI).ln() + 1.0;
    let constant = a * theta.ln() + ln_gamma(a) - 0.5 * ln_2pi_e;
    let t_mu = tape.scale(loc, -a);
    let t_rho = tape.scale(log_var, -0.5);
    let var = tape.exp(log_var);
    let half_var = tape.scale(var, 0.5);
    let arg = tape.add(loc, half_var);
    let e = tape.exp(arg);
    let e_t = tape.scale(e, 1.0 / theta);
    let s1 = tape.add(t_mu, t_rho);
    let s2 = tape.add(s1, e_t);
    let s3 = tape.add_scalar(s2, constant);
    tape.sum_all(s3)
}

/// KL( LogNormal || InvGamma(a, b) ) summed elementwise, as a tape graph.
fn kl_lognormal_invgamma_graph(
    tape: &mut Tape,
    loc: NodeId,
    log_var: NodeId,
    a: f64,
    b: f64,
) -> NodeId {
    use statrs::function::gamma::ln_gamma;
    let ln_2pi_e = (2.0 * std::f64::consts::PI).ln() + 1.0;
    let constant = -a * b.ln() + ln_gamma(a) - 0.5 * ln_2pi_e;
    let t_mu = tape.scale(loc, a);
    let t_rho = tape.scale(log_var, -0.5);
    let var = tape.exp(log_var);
    let half_var = tape.scale(var, 0.5);
    let arg = tape.sub(half_var, loc);
    let e = tape.exp(arg);
    let e_b = tape.scale(e, b);
    let s1 = tape.add(t_mu, t_rho);
    let s2 = tape.add(s1, e_b);
    let s3 = tape.add_scalar(s2, constant);
    tape.sum_all(s3)
}

/// Whole-layer KL as a differentiable graph; value matches
/// [`HorseshoeLayer::kl`] term by term. `w_var` is the shared
/// `exp(w_log_var)` node.
pub fn layer_kl_graph(tape: &mut Tape, nodes: &LayerNodes, w_var: NodeId, tau0: f64) -> NodeId {
    let gauss = tape.gaussian_kl(nodes.w_mean, nodes.w_log_var, w_var);

    let unit_a = kl_lognormal_gamma_graph(tape, nodes.ua_loc, nodes.ua_log_var, 0.5, 1.0);
    let unit_b = kl_lognormal_invgamma_graph(tape, nodes.ub_loc, nodes.ub_log_var, 0.5, 1.0);
    let glob_a = kl_lognormal_gamma_graph(tape, nodes.ga_loc, nodes.ga_log_var, 0.5, tau0 * tau0);
    let glob_b = kl_lognormal_invgamma_graph(tape, nodes.gb_loc, nodes.gb_log_var, 0.5, 1.0);

    let t1 = tape.add(gauss, unit_a);
    let t2 = tape.add(t1, unit_b);
    let t3 = tape.add(t2, glob_a);
    tape.add(t3, glob_b)
}

/// One effective weight matrix drawn from the layer posterior:
/// w_ij = (mu_ij + sigma_ij eps_ij) * z_i * s with a single scale draw
/// shared by the whole matrix. Draw order: unit scales, global scale,
/// weight noise (row-major).
pub fn sample_weight_matrix(layer: &HorseshoeLayer, rng: &mut impl Rng) -> Matrix {
    let (d, k) = layer.weights.mean.shape();
    let mut eps_unit = Matrix::zeros(1, d);
    let mut eps_global = Matrix::zeros(1, 1);
    eps_unit.fill_standard_normal(rng);
    eps_global.fill_standard_normal(rng);

    let scale_draw = |a: &LogNormalPosterior, b: &LogNormalPosterior, i: usize, eps: f64| {
        let loc = 0.5 * (a.loc.data()[i] + b.loc.data()[i]);
        let sd = (0.25 * (a.log_var.data()[i].exp() + b.log_var.data()[i].exp())).sqrt();
        (loc + sd * eps).exp()
    };
    let s = scale_draw(
        &layer.global_alpha,
        &layer.global_beta,
        0,
        eps_global.at(0, 0),
    );
    let row_scale: Vec<f64> = (0..d)
        .map(|i| scale_draw(&layer.unit_alpha, &layer.unit_beta, i, eps_unit.at(0, i)) * s)
        .collect();

    let mut w = Matrix::zeros(d, k);
    let mean = layer.weights.mean.data();
    let log_var = layer.weights.log_var.data();
    let out = w.data_mut();
    for i in 0..d {
        for j in 0..k {
            let idx = i * k + j;
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            out[idx] = (mean[idx] + (0.5 * log_var[idx]).exp() * eps) * row_scale[i];
        }
    }
    w
}

/// Plain (non-tape) sampled pre-activation used for prediction; draws
/// noise in the same order as [`LayerNoise::sample`], so a shared rng
/// stream yields bit-identical results to the tape path.
pub fn sample_preactivation(
    x_aug: &Matrix,
    layer: &HorseshoeLayer,
    rng: &mut impl Rng,
) -> Result<Matrix> {
    let (batch, d) = x_aug.shape();
    if d != layer.d_in() {
        return Err(Error::Shape {
            op: "sample_preactivation",
            expected: format!("{} input units", layer.d_in()),
            got: format!("{d}"),
        });
    }
    let noise = LayerNoise::sample(batch, d, layer.k_out(), rng);

    let scale_params = |a: &LogNormalPosterior, b: &LogNormalPosterior, i: usize| {
        let loc = 0.5 * (a.loc.data()[i] + b.loc.data()[i]);
        let sd = (0.25 * (a.log_var.data()[i].exp() + b.log_var.data()[i].exp())).sqrt();
        (loc, sd)
    };

    let mut x_scaled = Matrix::zeros(batch, d);
    for r in 0..batch {
        let (loc_s, sd_s) = scale_params(&layer.global_alpha, &layer.global_beta, 0);
        let s = (loc_s + sd_s * noise.eps_global.at(r, 0)).exp();
        for c in 0..d {
            let (loc_z, sd_z) = scale_params(&layer.unit_alpha, &layer.unit_beta, c);
            let z = (loc_z + sd_z * noise.eps_unit.at(r, c)).exp();
            *x_scaled.at_mut(r, c) = x_aug.at(r, c) * z * s;
        }
    }

    let mean = x_scaled.matmul(&layer.weights.mean);
    let x_sq = x_scaled.map(|v| v * v);
    let w_var = layer.weights.log_var.map(f64::exp);
    let var = x_sq.matmul(&w_var);
    let mut out = mean;
    for i in 0..out.len() {
        out.data_mut()[i] += var.data()[i].sqrt() * noise.eps_pre.data()[i];
    }
    Ok(out)
}
