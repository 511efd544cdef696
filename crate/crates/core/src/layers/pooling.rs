use super::FeatureMap;
use crate::error::LayerError;
use crate::tensor::Matrix;

/// 1-max pooled features with the winning window per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledVector {
    pub values: Vec<f64>,
    /// Smallest window index attaining the maximum.
    pub argmax: Vec<usize>,
}

impl PooledVector {
    /// Routes `upstream` to the argmax windows of a `windows × filters`
    /// gradient matrix.
    pub fn backward(&self, upstream: &[f64], windows: usize) -> Matrix {
        let mut g = Matrix::zeros(windows, self.values.len());
        for (f, (&arg, &u)) in self.argmax.iter().zip(upstream).enumerate() {
            g.add_at(arg, f, u);
        }
        g
    }
}

pub fn max_pool(map: &FeatureMap) -> Result<PooledVector, LayerError> {
    let m = &map.values;
    if m.rows() == 0 || m.cols() == 0 {
        return Err(LayerError::EmptyFeatureMap);
    }
    let mut values = m.row(0).to_vec();
    let mut argmax = vec![0; m.cols()];
    for p in 1..m.rows() {
        for (f, &v) in m.row(p).iter().enumerate() {
            if v > values[f] {
                values[f] = v;
                argmax[f] = p;
            }
        }
    }
    Ok(PooledVector { values, argmax })
}

pub fn tanh_forward(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.tanh()).collect()
}

/// Gradient through `t = tanh(v)` given the forward output `t`.
pub fn tanh_backward(t: &[f64], upstream: &[f64]) -> Vec<f64> {
    t.iter()
        .zip(upstream)
        .map(|(&t, &g)| g * (1.0 - t * t))
        .collect()
}
