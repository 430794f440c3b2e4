//! Variational Bayesian linear layers with the group horseshoe prior:
//! factorized posteriors, local reparameterization, a closed-form KL
//! catalog, ELBO assembly with data-set-size rescaling, and Monte-Carlo
//! prediction.

pub mod checkpoint;
mod kl;
mod layer;
mod model;

pub use kl::{kl_gaussian_std, kl_lognormal_gamma, kl_lognormal_invgamma, VARIANCE_FLOOR};
pub use layer::{
    layer_kl_graph, preactivation_graph, sample_preactivation, sample_weight_matrix,
    GaussianPosterior, HorseshoeLayer, LayerNodes, LayerNoise, LogNormalPosterior,
    PARAMS_PER_LAYER,
};
pub use model::{BnnModel, ElboGrads, Head, ModelNoise, Targets};
