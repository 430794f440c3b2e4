//! Dense row-major `f64` matrices.
//!
//! The only heavy kernel, matrix multiplication, is delegated to
//! `matrixmultiply::dgemm`; everything else is plain loops. Shapes are
//! validated with `assert!` on the hot path (programmer error), while the
//! public spec-level entry points in [`crate::nn`] return `Result`.

use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Scalar 1x1 matrix.
    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, vec![value])
    }

    /// Entries drawn i.i.d. from N(mean, std^2), filled in row-major order.
    pub fn randn(rows: usize, cols: usize, mean: f64, std: f64, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.fill_standard_normal(rng);
        for v in &mut m.data {
            *v = mean + std * *v;
        }
        m
    }

    /// Overwrites every entry with a standard-normal draw (row-major order).
    pub fn fill_standard_normal(&mut self, rng: &mut impl Rng) {
        for v in &mut self.data {
            *v = rng.sample(StandardNormal);
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self @ rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: inner dimensions {} and {} differ",
            self.cols, rhs.rows
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        dgemm_into(1.0, self, false, rhs, false, 0.0, &mut out);
        out
    }

    /// `out += alpha * op(a) @ op(b)` where `op` optionally transposes.
    pub fn matmul_acc(&mut self, alpha: f64, a: &Matrix, ta: bool, b: &Matrix, tb: bool) {
        dgemm_into(alpha, a, ta, b, tb, 1.0, self);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn apply(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn zip(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert!(self.same_shape(other), "zip: shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`, elementwise.
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) {
        assert!(self.same_shape(other), "add_scaled: shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `self += g .* w`, elementwise product accumulate.
    pub fn add_prod(&mut self, g: &Matrix, w: &Matrix) {
        assert!(
            self.same_shape(g) && self.same_shape(w),
            "add_prod: shape mismatch"
        );
        for i in 0..self.data.len() {
            self.data[i] += g.data[i] * w.data[i];
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column sums as a 1xC matrix.
    pub fn col_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, &v) in out.data.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Row sums as an Rx1 matrix.
    pub fn row_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, 1);
        for i in 0..self.rows {
            out.data[i] = self.data[i * self.cols..(i + 1) * self.cols].iter().sum();
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// `c = alpha * op(a) @ op(b) + beta * c`.
pub(crate) fn dgemm_into(
    alpha: f64,
    a: &Matrix,
    ta: bool,
    b: &Matrix,
    tb: bool,
    beta: f64,
    c: &mut Matrix,
) {
    let (am, ak) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (bk, bn) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(ak, bk, "dgemm: inner dimensions {} and {} differ", ak, bk);
    assert_eq!((c.rows, c.cols), (am, bn), "dgemm: output shape mismatch");
    let (rsa, csa) = if ta {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if tb {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    unsafe {
        matrixmultiply::dgemm(
            am,
            ak,
            bn,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}
