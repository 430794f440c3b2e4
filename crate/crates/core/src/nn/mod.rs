//! Minimal dense linear algebra with reverse-mode automatic
//! differentiation, activations and the Adam optimizer — everything a
//! 3-layer MLP on flattened 24x24 inputs needs, in double precision.

mod adam;
mod gradcheck;
mod matrix;
mod tape;

pub use adam::{adam_step, AdamState};
pub use gradcheck::gradient_check;
pub use matrix::Matrix;
pub use tape::{elu_scalar, sigmoid, softplus, NodeId, Tape};

use crate::error::{Error, Result};

/// Matrix product `h @ w` with shape validation.
pub fn affine(h: &Matrix, w: &Matrix) -> Result<Matrix> {
    if h.cols() != w.rows() {
        return Err(Error::Shape {
            op: "affine",
            expected: format!("inner dimension {}", h.cols()),
            got: format!("{}", w.rows()),
        });
    }
    Ok(h.matmul(w))
}

/// Elementwise ELU with alpha = 1.
pub fn elu(x: &Matrix) -> Matrix {
    x.map(elu_scalar)
}
