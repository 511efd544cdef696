//! Layer primitives with hand-derived backward passes.
//!
//! Sequences are stored position-major: a sequence of `L` vectors of width
//! `d` is a `Matrix` with `L` rows and `d` columns, so row `j` is the
//! vector for token position `j`.

mod conv;
mod embedding;
mod hidden;
mod pooling;

pub use conv::{conv_windows, FeatureMap, FilterBank};
pub use embedding::{EmbeddingGrad, EmbeddingMatrix, PretrainedVectors};
pub use hidden::HiddenLayerParams;
pub use pooling::{max_pool, tanh_backward, tanh_forward, PooledVector};

use rand::Rng;

use crate::tensor::Matrix;

/// Uniform draw in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_uniform<R: Rng>(
    rng: &mut R,
    fan_in: usize,
    fan_out: usize,
    n: usize,
) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Appends zero rows until the sequence has at least `min_len` positions.
pub fn pad_positions(m: &Matrix, min_len: usize) -> Matrix {
    if m.rows() >= min_len {
        return m.clone();
    }
    let mut data = m.as_slice().to_vec();
    data.resize(min_len * m.cols(), 0.0);
    Matrix::from_vec(min_len, m.cols(), data)
}

/// Drops padding rows added by [`pad_positions`].
pub fn truncate_positions(m: &Matrix, len: usize) -> Matrix {
    if m.rows() <= len {
        return m.clone();
    }
    Matrix::from_vec(len, m.cols(), m.as_slice()[..len * m.cols()].to_vec())
}
