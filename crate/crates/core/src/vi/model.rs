//! Stacked horseshoe layers with a likelihood head: ELBO assembly,
//! gradients and Monte-Carlo prediction.

use super::layer::{
    layer_kl_graph, preactivation_graph, sample_preactivation, HorseshoeLayer, LayerNodes,
    LayerNoise, PARAMS_PER_LAYER,
};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Matrix, NodeId, Tape};
use rand::Rng;

/// Likelihood head. Binary tasks use a Bernoulli likelihood with a logit
/// link; numerosity uses a categorical likelihood over object counts
/// 1..=classes via softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    BernoulliLogit,
    Categorical { classes: usize },
}

impl Head {
    pub fn output_dim(&self) -> usize {
        match self {
            Head::BernoulliLogit => 1,
            Head::Categorical { classes } => *classes,
        }
    }
}

/// Training targets for one batch.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// 0/1 labels for the Bernoulli head.
    Binary(&'a [u8]),
    /// Object counts 1..=classes for the categorical head.
    Counts(&'a [u8]),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Binary(v) => v.len(),
            Targets::Counts(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnnModel {
    pub layers: Vec<HorseshoeLayer>,
    pub head: Head,
}

/// Sampling noise for one full forward pass.
pub struct ModelNoise {
    pub layers: Vec<LayerNoise>,
}

impl ModelNoise {
    /// Fixed draw order: layers front to back, per layer as in
    /// [`LayerNoise::sample`].
    pub fn sample(model: &BnnModel, batch: usize, rng: &mut impl Rng) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| LayerNoise::sample(batch, l.d_in(), l.k_out(), rng))
            .collect();
        Self { layers }
    }
}

/// Gradients of the *negative* ELBO, aligned with
/// [`BnnModel::param_layers`]: one block of [`PARAMS_PER_LAYER`] matrices
/// per layer, in declaration order.
pub struct ElboGrads {
    pub elbo: f64,
    pub grads: Vec<Vec<Matrix>>,
}

impl BnnModel {
    /// A fresh model with `hidden_layers` ELU hidden layers of width
    /// `hidden` and an identity-linked output layer (the head applies the
    /// likelihood link). Every layer gets its own bias unit.
    pub fn init(
        input_dim: usize,
        hidden: usize,
        hidden_layers: usize,
        head: Head,
        tau0: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(hidden).take(hidden_layers));
        dims.push(head.output_dim());
        let layers = dims
            .windows(2)
            .map(|w| HorseshoeLayer::init(w[0] + 1, w[1], tau0, rng))
            .collect();
        Self { layers, head }
    }

    /// Raw input dimension (without the bias unit).
    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in() - 1
    }

    /// Width of the head's probability output.
    pub fn head_dim(&self) -> usize {
        self.head.output_dim()
    }

    pub fn param_layers(&self) -> Vec<[&Matrix; PARAMS_PER_LAYER]> {
        self.layers.iter().map(|l| l.params()).collect()
    }

    pub fn param_layers_mut(&mut self) -> Vec<[&mut Matrix; PARAMS_PER_LAYER]> {
        self.layers.iter_mut().map(|l| l.params_mut()).collect()
    }

    /// Total parameter count across all variational parameters.
    pub fn param_count(&self) -> usize {
        self.param_layers()
            .iter()
            .flat_map(|ps| ps.iter().map(|p| p.len()))
            .sum()
    }

    /// Sum of layer KLs (plain scalar route).
    pub fn kl(&self) -> Result<f64> {
        self.layers.iter().map(|l| l.kl()).sum()
    }

    fn check_targets(&self, y: &Targets, batch: usize) -> Result<()> {
        if y.len() != batch {
            return Err(Error::Shape {
                op: "elbo",
                expected: format!("{batch} targets"),
                got: format!("{}", y.len()),
            });
        }
        match (self.head, y) {
            (Head::BernoulliLogit, Targets::Binary(v)) => {
                if let Some(bad) = v.iter().find(|&&b| b > 1) {
                    return Err(Error::Label {
                        head: "bernoulli",
                        msg: format!("label {bad} is not 0/1"),
                    });
                }
            }
            (Head::Categorical { classes }, Targets::Counts(v)) => {
                if let Some(bad) = v.iter().find(|&&c| c == 0 || c as usize > classes) {
                    return Err(Error::Label {
                        head: "categorical",
                        msg: format!("count {bad} outside 1..={classes}"),
                    });
                }
            }
            _ => {
                return Err(Error::Label {
                    head: "model",
                    msg: "target kind does not match head".into(),
                })
            }
        }
        Ok(())
    }

    /// Builds the sampled network logits on the tape: input -> bias
    /// augmentation -> locally reparameterized layers with ELU between
    /// them, identity on the last. `w_vars` are the shared exp(log_var)
    /// nodes, one per layer.
    fn logits_graph(
        &self,
        tape: &mut Tape,
        x: &Matrix,
        nodes: &[LayerNodes],
        w_vars: &[NodeId],
        noise: &ModelNoise,
    ) -> NodeId {
        let mut h = tape.leaf(x.clone());
        for (i, layer_nodes) in nodes.iter().enumerate() {
            let aug = tape.append_ones_col(h);
            let pre = preactivation_graph(tape, aug, layer_nodes, w_vars[i], &noise.layers[i]);
            h = if i + 1 < nodes.len() {
                tape.elu(pre)
            } else {
                pre
            };
        }
        h
    }

    /// Negative log-likelihood sum over the batch as a tape graph.
    fn nll_graph(&self, tape: &mut Tape, logits: NodeId, y: &Targets) -> NodeId {
        match (self.head, y) {
            (Head::BernoulliLogit, Targets::Binary(labels)) => {
                // -log p(y|f) = softplus((1 - 2y) f)
                let sign =
                    Matrix::from_vec(labels.len(), 1, labels.iter().map(|&b| 1.0 - 2.0 * b as f64).collect());
                let sign = tape.leaf(sign);
                let margin = tape.mul(sign, logits);
                let sp = tape.softplus(margin);
                tape.sum_all(sp)
            }
            (Head::Categorical { classes }, Targets::Counts(counts)) => {
                // -log p(y|f) = logsumexp(f) - f_y
                let mut onehot = Matrix::zeros(counts.len(), classes);
                for (i, &c) in counts.iter().enumerate() {
                    *onehot.at_mut(i, c as usize - 1) = 1.0;
                }
                let onehot = tape.leaf(onehot);
                let lse = tape.row_logsumexp(logits);
                let lse_sum = tape.sum_all(lse);
                let picked = tape.mul(onehot, logits);
                let picked_sum = tape.sum_all(picked);
                tape.sub(lse_sum, picked_sum)
            }
            _ => unreachable!("targets validated against head"),
        }
    }

    /// Full negative-ELBO graph with the minibatch likelihood rescaled by
    /// `n_total / batch`.
    pub fn neg_elbo_graph(
        &self,
        tape: &mut Tape,
        nodes: &[LayerNodes],
        x: &Matrix,
        y: &Targets,
        n_total: usize,
        noise: &ModelNoise,
    ) -> NodeId {
        let batch = x.rows();
        let w_vars: Vec<NodeId> = nodes.iter().map(|ln| tape.exp(ln.w_log_var)).collect();
        let logits = self.logits_graph(tape, x, nodes, &w_vars, noise);
        let nll = self.nll_graph(tape, logits, y);
        let scaled = tape.scale(nll, n_total as f64 / batch as f64);
        let mut total = scaled;
        for ((layer, layer_nodes), &w_var) in self.layers.iter().zip(nodes).zip(&w_vars) {
            let kl = layer_kl_graph(tape, layer_nodes, w_var, layer.tau0);
            total = tape.add(total, kl);
        }
        total
    }

    /// Single-sample ELBO estimate for one batch.
    pub fn elbo(&self, x: &Matrix, y: &Targets, n_total: usize, rng: &mut impl Rng) -> Result<f64> {
        self.check_batch(x, y, n_total)?;
        let noise = ModelNoise::sample(self, x.rows(), rng);
        let mut tape = Tape::new();
        let nodes: Vec<LayerNodes> = self
            .layers
            .iter()
            .map(|l| LayerNodes::from_layer(&mut tape, l))
            .collect();
        let root = self.neg_elbo_graph(&mut tape, &nodes, x, y, n_total, &noise);
        Ok(-tape.value(root).at(0, 0))
    }

    /// Single-sample ELBO and gradients of the negative ELBO for every
    /// variational parameter.
    pub fn elbo_grads(
        &self,
        x: &Matrix,
        y: &Targets,
        n_total: usize,
        rng: &mut impl Rng,
    ) -> Result<ElboGrads> {
        self.check_batch(x, y, n_total)?;
        let noise = ModelNoise::sample(self, x.rows(), rng);
        let mut tape = Tape::new();
        let nodes: Vec<LayerNodes> = self
            .layers
            .iter()
            .map(|l| LayerNodes::from_layer(&mut tape, l))
            .collect();
        let root = self.neg_elbo_graph(&mut tape, &nodes, x, y, n_total, &noise);
        let value = tape.value(root).at(0, 0);
        tape.backward(root);
        let grads = nodes
            .iter()
            .map(|ln| ln.ids().iter().map(|&id| tape.take_grad(id)).collect())
            .collect();
        Ok(ElboGrads {
            elbo: -value,
            grads,
        })
    }

    fn check_batch(&self, x: &Matrix, y: &Targets, n_total: usize) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "elbo",
                expected: format!("{} input columns", self.input_dim()),
                got: format!("{}", x.cols()),
            });
        }
        if n_total < x.rows() || x.rows() == 0 {
            return Err(Error::Domain {
                op: "elbo",
                msg: format!("need N >= M >= 1, got N = {n_total}, M = {}", x.rows()),
            });
        }
        self.check_targets(y, x.rows())
    }

    /// One sampled forward pass outside the tape; shares the noise order
    /// with the graph path bit for bit.
    pub fn sample_logits(&self, x: &Matrix, rng: &mut impl Rng) -> Result<Matrix> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let aug = Matrix::from_fn(h.rows(), h.cols() + 1, |r, c| {
                if c < h.cols() {
                    h.at(r, c)
                } else {
                    1.0
                }
            });
            let pre = sample_preactivation(&aug, layer, rng)?;
            h = if i + 1 < self.layers.len() {
                pre.map(crate::nn::elu_scalar)
            } else {
                pre
            };
        }
        Ok(h)
    }

    fn head_probs(&self, logits: Matrix) -> Matrix {
        match self.head {
            Head::BernoulliLogit => logits.map(sigmoid),
            Head::Categorical { .. } => {
                let mut out = logits;
                let k = self.head.output_dim();
                for i in 0..out.rows() {
                    let row = &mut out.data_mut()[i * k..(i + 1) * k];
                    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - m).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                }
                out
            }
        }
    }

    /// Head probabilities for one locally reparameterized pass (the
    /// training-path sampler): Bernoulli gives one column p(y = 1);
    /// categorical gives a softmax row per sample.
    pub fn sample_probs(&self, x: &Matrix, rng: &mut impl Rng) -> Result<Matrix> {
        let logits = self.sample_logits(x, rng)?;
        Ok(self.head_probs(logits))
    }

    /// Deterministic forward pass through one drawn set of weight
    /// matrices.
    pub fn forward_with_weights(&self, x: &Matrix, weights: &[Matrix]) -> Matrix {
        let mut h = x.clone();
        for (i, w) in weights.iter().enumerate() {
            let aug = Matrix::from_fn(h.rows(), h.cols() + 1, |r, c| {
                if c < h.cols() {
                    h.at(r, c)
                } else {
                    1.0
                }
            });
            let pre = aug.matmul(w);
            h = if i + 1 < weights.len() {
                pre.map(crate::nn::elu_scalar)
            } else {
                pre
            };
        }
        h
    }

    /// One weight draw per layer (front to back).
    pub fn sample_weights(&self, rng: &mut impl Rng) -> Vec<Matrix> {
        self.layers
            .iter()
            .map(|l| super::layer::sample_weight_matrix(l, rng))
            .collect()
    }

    /// Monte-Carlo posterior predictive: mean head probabilities over
    /// `samples` weight draws from the posterior (one sampled network per
    /// draw). Reproducible given the rng state.
    pub fn predict_mc(&self, x: &Matrix, samples: usize, rng: &mut impl Rng) -> Result<Matrix> {
        assert!(samples >= 1, "predict_mc needs at least one sample");
        let mut acc = Matrix::zeros(x.rows(), self.head.output_dim());
        for _ in 0..samples {
            let weights = self.sample_weights(rng);
            let p = self.head_probs(self.forward_with_weights(x, &weights));
            acc.add_scaled(1.0, &p);
        }
        acc.apply(|v| v / samples as f64);
        Ok(acc)
    }
}
