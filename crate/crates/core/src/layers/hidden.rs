use rand::Rng;

use super::glorot_uniform;
use crate::error::LayerError;
use crate::tensor::{axpy, dot, Matrix, SharedTensor};

/// Position-wise `z = tanh(W x + B)` layer.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLayerParams {
    /// `out × in`
    pub weight: SharedTensor,
    /// `out × 1`
    pub bias: SharedTensor,
}

impl HiddenLayerParams {
    pub fn new(weight: SharedTensor, bias: SharedTensor) -> Result<Self, LayerError> {
        if bias.rows() != weight.rows() || bias.cols() != 1 {
            return Err(LayerError::ShapeMismatch(format!(
                "bias {}x{} for weight {}x{}",
                bias.rows(),
                bias.cols(),
                weight.rows(),
                weight.cols()
            )));
        }
        Ok(HiddenLayerParams { weight, bias })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        let w = glorot_uniform(rng, input, output, input * output);
        HiddenLayerParams {
            weight: SharedTensor::from_vec(output, input, w),
            bias: SharedTensor::zeros(output, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Applies the layer to every row (position) of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix, LayerError> {
        if x.cols() != self.input_dim() {
            return Err(LayerError::ShapeMismatch(format!(
                "hidden layer expects input width {}, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let (inp, out_dim) = (self.input_dim(), self.output_dim());
        let (w, b) = (self.weight.to_vec(), self.bias.to_vec());
        let mut z = Matrix::zeros(x.rows(), out_dim);
        for j in 0..x.rows() {
            let xj = x.row(j);
            let zj = z.row_mut(j);
            for (o, slot) in zj.iter_mut().enumerate() {
                *slot = (dot(&w[o * inp..(o + 1) * inp], xj) + b[o]).tanh();
            }
        }
        Ok(z)
    }

    /// Backward pass given the forward input `x`, output `z` and upstream
    /// gradient `dz`. Parameter gradients are accumulated into `dweight`
    /// (`out·in`, row-major) and `dbias` (`out`); the input gradient is
    /// returned.
    pub fn backward(
        &self,
        x: &Matrix,
        z: &Matrix,
        dz: &Matrix,
        dweight: &mut [f64],
        dbias: &mut [f64],
    ) -> Matrix {
        let (inp, out) = (self.input_dim(), self.output_dim());
        let mut dx = Matrix::zeros(x.rows(), inp);
        let mut dpre = vec![0.0; out];
        let w = self.weight.to_vec();
        for j in 0..x.rows() {
            for (o, d) in dpre.iter_mut().enumerate() {
                let zv = z.get(j, o);
                *d = dz.get(j, o) * (1.0 - zv * zv);
            }
            let xj = x.row(j);
            for (o, &g) in dpre.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                dbias[o] += g;
                axpy(g, xj, &mut dweight[o * inp..(o + 1) * inp]);
                axpy(g, &w[o * inp..(o + 1) * inp], dx.row_mut(j));
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: Vec<f64>, out: usize, inp: usize, b: Vec<f64>) -> HiddenLayerParams {
        HiddenLayerParams::new(
            SharedTensor::from_vec(out, inp, w),
            SharedTensor::from_vec(out, 1, b),
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_zero() {
        let h = layer(vec![0.0; 6], 3, 2, vec![0.0; 3]);
        let z = h
            .forward(&Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_weight() {
        let h = layer(vec![1.0], 1, 1, vec![0.0]);
        let z = h.forward(&Matrix::from_vec(3, 1, vec![0.5; 3])).unwrap();
        // tanh(0.5) = (e - 1) / (e + 1) with e = exp(1)
        let e = 1f64.exp();
        let oracle = (e - 1.0) / (e + 1.0);
        for &v in z.as_slice() {
            assert!((v - oracle).abs() < 1e-15);
            assert!((v - 0.462_117).abs() < 1e-6);
        }
    }

    #[test]
    fn output_shape() {
        let mut rng = rand::thread_rng();
        let h = HiddenLayerParams::init(&mut rng, 100, 200);
        let z = h.forward(&Matrix::zeros(7, 100)).unwrap();
        assert_eq!((z.rows(), z.cols()), (7, 200));
        assert_eq!(h.param_count(), 100 * 200 + 200);
    }

    #[test]
    fn shape_mismatch() {
        let h = layer(vec![0.0; 6], 3, 2, vec![0.0; 3]);
        assert!(matches!(
            h.forward(&Matrix::zeros(1, 3)),
            Err(LayerError::ShapeMismatch(_))
        ));
        assert!(
            HiddenLayerParams::new(SharedTensor::zeros(3, 2), SharedTensor::zeros(2, 1)).is_err()
        );
    }
}
