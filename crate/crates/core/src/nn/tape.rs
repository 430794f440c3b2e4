//! Define-by-run reverse-mode automatic differentiation over [`Matrix`].
//!
//! A [`Tape`] records one forward pass as an append-only list of nodes;
//! [`Tape::backward`] then walks the list in reverse and accumulates
//! gradients into per-node buffers. Parents always precede children, so a
//! single reverse sweep suffices. The tape is rebuilt for every forward
//! pass; there is no graph caching.
//!
//! Shape mismatches on tape operations are programmer errors and panic.

use super::matrix::{dgemm_into, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Copy)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId),
    Scale(NodeId, f64),
    Exp(NodeId),
    Sqrt(NodeId),
    Square(NodeId),
    Softplus(NodeId),
    Elu(NodeId),
    /// 1xC value replicated over `rows` rows.
    BroadcastRows(NodeId),
    /// Rx1 value replicated over `cols` columns.
    BroadcastCols(NodeId),
    RowSum(NodeId),
    SumAll(NodeId),
    RowLogSumExp(NodeId),
    AppendOnesCol(NodeId),
    /// Scalar 0.5 * sum(mu^2 + var - rho - 1) with var = exp(rho) passed
    /// as its own node (fused: the dominant KL term runs in one pass).
    GaussianKl(NodeId, NodeId, NodeId),
    /// exp(loc + sd .* eps) with loc, sd 1xC broadcast over the rows of
    /// the MxC noise node (fused log-normal sampler).
    LogNormalRows(NodeId, NodeId, NodeId),
}

pub struct Tape {
    values: Vec<Matrix>,
    ops: Vec<Op>,
    grads: Vec<Matrix>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        NodeId(self.values.len() - 1)
    }

    /// Registers an input node. Leaves receive gradients but do not
    /// propagate further.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.values[id.0]
    }

    /// Gradient of the last `backward` root with respect to `id`.
    pub fn grad(&self, id: NodeId) -> &Matrix {
        &self.grads[id.0]
    }

    /// Moves the gradient buffer out of the tape (replaced by an empty one).
    pub fn take_grad(&mut self, id: NodeId) -> Matrix {
        std::mem::replace(&mut self.grads[id.0], Matrix::zeros(0, 0))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.values[a.0].matmul(&self.values[b.0]);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.values[a.0].zip(&self.values[b.0], |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.values[a.0].zip(&self.values[b.0], |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.values[a.0].zip(&self.values[b.0], |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.values[a.0].map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.values[a.0].map(|x| c * x);
        self.push(out, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].map(f64::sqrt);
        self.push(out, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].map(softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].map(elu_scalar);
        self.push(out, Op::Elu(a))
    }

    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> NodeId {
        let v = &self.values[a.0];
        assert_eq!(v.rows(), 1, "broadcast_rows: input must be 1xC");
        let out = Matrix::from_fn(rows, v.cols(), |_, j| v.at(0, j));
        self.push(out, Op::BroadcastRows(a))
    }

    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> NodeId {
        let v = &self.values[a.0];
        assert_eq!(v.cols(), 1, "broadcast_cols: input must be Rx1");
        let out = Matrix::from_fn(v.rows(), cols, |i, _| v.at(i, 0));
        self.push(out, Op::BroadcastCols(a))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].row_sums();
        self.push(out, Op::RowSum(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let out = Matrix::scalar(self.values[a.0].sum());
        self.push(out, Op::SumAll(a))
    }

    /// Numerically stable log-sum-exp over each row: RxC -> Rx1.
    pub fn row_logsumexp(&mut self, a: NodeId) -> NodeId {
        let v = &self.values[a.0];
        let mut out = Matrix::zeros(v.rows(), 1);
        for i in 0..v.rows() {
            let row = &v.data()[i * v.cols()..(i + 1) * v.cols()];
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let s: f64 = row.iter().map(|&x| (x - m).exp()).sum();
            *out.at_mut(i, 0) = m + s.ln();
        }
        self.push(out, Op::RowLogSumExp(a))
    }

    /// KL( N(mu, e^rho) || N(0,1) ) summed over all entries:
    /// 0.5 * sum(mu^2 + var - rho - 1), with `var` the exp(rho) node
    /// (shared with other consumers of the weight variance).
    pub fn gaussian_kl(&mut self, mu: NodeId, rho: NodeId, var: NodeId) -> NodeId {
        let m = &self.values[mu.0];
        let r = &self.values[rho.0];
        let v = &self.values[var.0];
        assert!(m.same_shape(r) && m.same_shape(v), "gaussian_kl shapes");
        let mut total = 0.0;
        for i in 0..m.len() {
            let mu_i = m.data()[i];
            total += mu_i * mu_i + v.data()[i] - r.data()[i] - 1.0;
        }
        self.push(Matrix::scalar(0.5 * total), Op::GaussianKl(mu, rho, var))
    }

    /// Row-broadcast log-normal draw: out[r][c] = exp(loc[c] + sd[c] *
    /// eps[r][c]). Gradients flow into `loc` and `sd` (and the noise
    /// node, though that is normally a leaf).
    pub fn lognormal_rows(&mut self, loc: NodeId, sd: NodeId, eps: NodeId) -> NodeId {
        let l = &self.values[loc.0];
        let s = &self.values[sd.0];
        let e = &self.values[eps.0];
        assert!(
            l.rows() == 1 && s.rows() == 1 && l.cols() == e.cols() && s.cols() == e.cols(),
            "lognormal_rows shapes"
        );
        let cols = e.cols();
        let mut out = Matrix::zeros(e.rows(), cols);
        for r in 0..e.rows() {
            for c in 0..cols {
                *out.at_mut(r, c) = (l.data()[c] + s.data()[c] * e.at(r, c)).exp();
            }
        }
        self.push(out, Op::LogNormalRows(loc, sd, eps))
    }

    /// Appends a constant-1 column: RxC -> Rx(C+1). The extra column is the
    /// bias unit.
    pub fn append_ones_col(&mut self, a: NodeId) -> NodeId {
        let v = &self.values[a.0];
        let out = Matrix::from_fn(v.rows(), v.cols() + 1, |i, j| {
            if j < v.cols() {
                v.at(i, j)
            } else {
                1.0
            }
        });
        self.push(out, Op::AppendOnesCol(a))
    }

    /// Accumulates gradients of the scalar node `root` into every node.
    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(
            self.values[root.0].shape(),
            (1, 1),
            "backward root must be a 1x1 scalar"
        );
        self.grads = self
            .values
            .iter()
            .map(|v| Matrix::zeros(v.rows(), v.cols()))
            .collect();
        *self.grads[root.0].at_mut(0, 0) = 1.0;

        for idx in (0..self.ops.len()).rev() {
            let (before, rest) = self.grads.split_at_mut(idx);
            let g = &rest[0];
            if g.max_abs() == 0.0 {
                continue;
            }
            match self.ops[idx] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    // dA += g @ B^T ; dB += A^T @ g
                    dgemm_into(1.0, g, false, &self.values[b.0], true, 1.0, &mut before[a.0]);
                    if a.0 == b.0 {
                        dgemm_into(1.0, &self.values[a.0], true, g, false, 1.0, &mut before[a.0]);
                    } else {
                        dgemm_into(1.0, &self.values[a.0], true, g, false, 1.0, &mut before[b.0]);
                    }
                }
                Op::Add(a, b) => {
                    before[a.0].add_scaled(1.0, g);
                    before[b.0].add_scaled(1.0, g);
                }
                Op::Sub(a, b) => {
                    before[a.0].add_scaled(1.0, g);
                    before[b.0].add_scaled(-1.0, g);
                }
                Op::Mul(a, b) => {
                    // a == b degenerates to d(x.*x) = 2x: both accumulations
                    // land on the same buffer.
                    before[a.0].add_prod(g, &self.values[b.0]);
                    before[b.0].add_prod(g, &self.values[a.0]);
                }
                Op::AddScalar(a) => before[a.0].add_scaled(1.0, g),
                Op::Scale(a, c) => before[a.0].add_scaled(c, g),
                Op::Exp(a) => before[a.0].add_prod(g, &self.values[idx]),
                Op::Sqrt(a) => {
                    let out = &self.values[idx];
                    let ga = &mut before[a.0];
                    for i in 0..g.len() {
                        ga.data_mut()[i] += g.data()[i] / (2.0 * out.data()[i]);
                    }
                }
                Op::Square(a) => {
                    let va = &self.values[a.0];
                    let ga = &mut before[a.0];
                    for i in 0..g.len() {
                        ga.data_mut()[i] += 2.0 * g.data()[i] * va.data()[i];
                    }
                }
                Op::Softplus(a) => {
                    let va = &self.values[a.0];
                    let ga = &mut before[a.0];
                    for i in 0..g.len() {
                        ga.data_mut()[i] += g.data()[i] * sigmoid(va.data()[i]);
                    }
                }
                Op::Elu(a) => {
                    let va = &self.values[a.0];
                    let ga = &mut before[a.0];
                    for i in 0..g.len() {
                        let d = if va.data()[i] > 0.0 {
                            1.0
                        } else {
                            va.data()[i].exp()
                        };
                        ga.data_mut()[i] += g.data()[i] * d;
                    }
                }
                Op::BroadcastRows(a) => before[a.0].add_scaled(1.0, &g.col_sums()),
                Op::BroadcastCols(a) => before[a.0].add_scaled(1.0, &g.row_sums()),
                Op::RowSum(a) => {
                    let ga = &mut before[a.0];
                    for i in 0..ga.rows() {
                        let gi = g.at(i, 0);
                        for j in 0..ga.cols() {
                            *ga.at_mut(i, j) += gi;
                        }
                    }
                }
                Op::SumAll(a) => {
                    let g0 = g.at(0, 0);
                    before[a.0].apply(|v| v + g0);
                }
                Op::RowLogSumExp(a) => {
                    let va = &self.values[a.0];
                    let out = &self.values[idx];
                    let ga = &mut before[a.0];
                    for i in 0..va.rows() {
                        let gi = g.at(i, 0);
                        let lse = out.at(i, 0);
                        for j in 0..va.cols() {
                            *ga.at_mut(i, j) += gi * (va.at(i, j) - lse).exp();
                        }
                    }
                }
                Op::AppendOnesCol(a) => {
                    let ga = &mut before[a.0];
                    for i in 0..ga.rows() {
                        for j in 0..ga.cols() {
                            *ga.at_mut(i, j) += g.at(i, j);
                        }
                    }
                }
                Op::GaussianKl(mu, rho, var) => {
                    let g0 = g.at(0, 0);
                    let vm = &self.values[mu.0];
                    let gm = &mut before[mu.0];
                    for i in 0..gm.len() {
                        gm.data_mut()[i] += g0 * vm.data()[i];
                    }
                    before[rho.0].apply(|x| x - 0.5 * g0);
                    before[var.0].apply(|x| x + 0.5 * g0);
                }
                Op::LogNormalRows(loc, sd, eps) => {
                    // d/dloc = out, d/dsd = out .* eps, d/deps = out .* sd
                    let out = &self.values[idx];
                    let e = &self.values[eps.0];
                    let s = &self.values[sd.0];
                    let cols = out.cols();
                    {
                        let gl = &mut before[loc.0];
                        for r in 0..out.rows() {
                            for c in 0..cols {
                                gl.data_mut()[c] += g.at(r, c) * out.at(r, c);
                            }
                        }
                    }
                    {
                        let gs = &mut before[sd.0];
                        for r in 0..out.rows() {
                            for c in 0..cols {
                                gs.data_mut()[c] += g.at(r, c) * out.at(r, c) * e.at(r, c);
                            }
                        }
                    }
                    let ge = &mut before[eps.0];
                    for r in 0..out.rows() {
                        for c in 0..cols {
                            *ge.at_mut(r, c) += g.at(r, c) * out.at(r, c) * s.data()[c];
                        }
                    }
                }
            }
        }
    }
}

/// ELU activation with alpha = 1.
pub fn elu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// ln(1 + e^x), stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_through_square_chain() {
        // f(w) = sum((w * w)) at w = [1, 2, 3]: df/dw = 2w
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        let sq = tape.square(w);
        let root = tape.sum_all(sq);
        assert_eq!(tape.value(root).at(0, 0), 14.0);
        tape.backward(root);
        assert_eq!(tape.grad(w).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_matmul() {
        // f = sum(A @ B); dA = ones @ B^T, dB = A^T @ ones
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(Matrix::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]));
        let c = tape.matmul(a, b);
        let root = tape.sum_all(c);
        tape.backward(root);
        assert_eq!(tape.grad(a).data(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(tape.grad(b).data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        // f = sum(w + w) -> df/dw = 2
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::scalar(3.0));
        let s = tape.add(w, w);
        let root = tape.sum_all(s);
        tape.backward(root);
        assert_eq!(tape.grad(w).at(0, 0), 2.0);
    }

    #[test]
    fn mul_same_node() {
        // f = w .* w -> df/dw = 2w
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::scalar(5.0));
        let p = tape.mul(w, w);
        let root = tape.sum_all(p);
        tape.backward(root);
        assert_eq!(tape.grad(w).at(0, 0), 10.0);
    }

    #[test]
    fn matmul_same_node() {
        // f = sum(A @ A) for 2x2 A
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let c = tape.matmul(a, a);
        let root = tape.sum_all(c);
        tape.backward(root);
        // d/dA sum(A@A) = ones @ A^T + A^T @ ones
        let expect = [
            1.0 + 2.0 + 1.0 + 3.0,
            3.0 + 4.0 + 1.0 + 3.0,
            1.0 + 2.0 + 2.0 + 4.0,
            3.0 + 4.0 + 2.0 + 4.0,
        ];
        assert_eq!(tape.grad(a).data(), &expect);
    }

    #[test]
    fn elu_values_and_continuity() {
        assert_eq!(elu_scalar(1.0), 1.0);
        assert_eq!(elu_scalar(0.0), 0.0);
        assert!((elu_scalar(-1.0) - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        // continuous at zero, derivative 1 on both sides
        assert!((elu_scalar(1e-12) - elu_scalar(-1e-12)) < 1e-11);
    }

    #[test]
    fn broadcast_and_reduce_roundtrip() {
        let mut tape = Tape::new();
        let v = tape.leaf(Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        let b = tape.broadcast_rows(v, 4);
        let root = tape.sum_all(b);
        assert_eq!(tape.value(root).at(0, 0), 24.0);
        tape.backward(root);
        assert_eq!(tape.grad(v).data(), &[4.0, 4.0, 4.0]);

        let mut tape = Tape::new();
        let v = tape.leaf(Matrix::from_vec(2, 1, vec![1.0, 2.0]));
        let b = tape.broadcast_cols(v, 3);
        let s = tape.row_sum(b);
        let root = tape.sum_all(s);
        assert_eq!(tape.value(root).at(0, 0), 9.0);
        tape.backward(root);
        assert_eq!(tape.grad(v).data(), &[3.0, 3.0]);
    }

    #[test]
    fn logsumexp_is_stable_and_differentiable() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_vec(1, 3, vec![1000.0, 1000.0, 1000.0]));
        let l = tape.row_logsumexp(x);
        let root = tape.sum_all(l);
        let v = tape.value(root).at(0, 0);
        assert!((v - (1000.0 + 3.0f64.ln())).abs() < 1e-9);
        tape.backward(root);
        for &g in tape.grad(x).data() {
            assert!((g - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn append_ones_col_gradient_drops_bias() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let aug = tape.append_ones_col(x);
        assert_eq!(tape.value(aug).shape(), (2, 3));
        assert_eq!(tape.value(aug).at(0, 2), 1.0);
        let sq = tape.square(aug);
        let root = tape.sum_all(sq);
        tape.backward(root);
        assert_eq!(tape.grad(x).data(), &[2.0, 4.0, 6.0, 8.0]);
    }
}
