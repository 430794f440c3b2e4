//! Variational Bayesian neural networks with a group horseshoe prior,
//! evaluated across training-set sizes on three procedurally generated
//! developmental tasks: occlusion, support and numerosity.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`] — dense matrices, a define-by-run gradient tape, ELU and Adam
//! - [`vi`] — horseshoe layers, closed-form KL terms, ELBO and
//!   Monte-Carlo prediction
//! - [`scenes`] — procedural scene generators with exact oracle labels
//! - [`dataset`] — balanced data-set assembly, stratified subsetting and
//!   a deterministic binary file format
//! - [`experiment`] — the training loop and the N-by-seed sweeps
//! - [`metrics`] — error rates, Weber-ratio estimation and exponential
//!   curve fitting
//! - [`config`] — the JSON run configuration consumed by the CLI

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scenes;
pub mod vi;

pub use error::{Error, Result};
