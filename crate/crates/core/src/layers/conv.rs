use rand::Rng;

use super::glorot_uniform;
use crate::error::LayerError;
use crate::tensor::{axpy, dot, Matrix, SharedTensor};

/// A bank of `n` narrow-convolution filters, each spanning `width`
/// positions of a `d_in`-dimensional sequence. No bias term.
///
/// Filter `f` is row `f` of `filters`; the weight applied to feature `r` of
/// the `k`-th position in a window is at column `k * d_in + r`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub filters: SharedTensor,
    pub width: usize,
    pub d_in: usize,
    /// Also emit skip windows with one interior gap.
    pub augmented: bool,
}

/// Convolution output: one row per window, one column per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub values: Matrix,
    /// Input positions covered by each window, strictly increasing.
    pub windows: Vec<Vec<usize>>,
}

impl FeatureMap {
    pub fn filter_count(&self) -> usize {
        self.values.cols()
    }

    pub fn window_count(&self) -> usize {
        self.values.rows()
    }

    /// Output of filter `f` at window `p`.
    pub fn value(&self, f: usize, p: usize) -> f64 {
        self.values.get(p, f)
    }
}

/// Window positions for a sequence of length `len`.
///
/// Contiguous windows `[s, s+width)` come first, in order of `s`. In
/// augmented mode they are followed by every window of `width` positions
/// taken from `width + 1` consecutive positions with one interior position
/// skipped, ordered by start and then by the skipped offset. For `width = 2`
/// these are exactly the pairs `(s, s + 2)`.
pub fn conv_windows(len: usize, width: usize, augmented: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if width == 0 || len < width {
        return out;
    }
    for s in 0..=len - width {
        out.push((s..s + width).collect());
    }
    if augmented && width >= 2 && len > width {
        for s in 0..len - width {
            for gap in 1..width {
                out.push((s..=s + width).filter(|&p| p != s + gap).collect());
            }
        }
    }
    out
}

impl FilterBank {
    pub fn new(
        filters: SharedTensor,
        width: usize,
        d_in: usize,
        augmented: bool,
    ) -> Result<Self, LayerError> {
        if width == 0 || d_in == 0 || filters.rows() == 0 || filters.cols() != width * d_in {
            return Err(LayerError::ShapeMismatch(format!(
                "filter bank {}x{} for width {width} and input dimension {d_in}",
                filters.rows(),
                filters.cols()
            )));
        }
        Ok(FilterBank {
            filters,
            width,
            d_in,
            augmented,
        })
    }

    pub fn init<R: Rng>(rng: &mut R, n: usize, d_in: usize, width: usize, augmented: bool) -> Self {
        let values = glorot_uniform(rng, width * d_in, n, n * width * d_in);
        FilterBank {
            filters: SharedTensor::from_vec(n, width * d_in, values),
            width,
            d_in,
            augmented,
        }
    }

    pub fn filter_count(&self) -> usize {
        self.filters.rows()
    }

    pub fn param_count(&self) -> usize {
        self.filters.len()
    }

    /// Narrow convolution of `x` (`L × d_in`, `L ≥ width`).
    pub fn forward(&self, x: &Matrix) -> Result<FeatureMap, LayerError> {
        if x.cols() != self.d_in {
            return Err(LayerError::ShapeMismatch(format!(
                "filters expect input width {}, got {}",
                self.d_in,
                x.cols()
            )));
        }
        if x.rows() < self.width {
            return Err(LayerError::ShapeMismatch(format!(
                "sequence of length {} shorter than filter width {}",
                x.rows(),
                self.width
            )));
        }
        let windows = conv_windows(x.rows(), self.width, self.augmented);
        let n = self.filter_count();
        let span = self.width * self.d_in;
        let filters = self.filters.to_vec();
        let mut values = Matrix::zeros(windows.len(), n);
        let mut gathered = vec![0.0; windows.len() * span];
        for (win, slot) in windows.iter().zip(gathered.chunks_exact_mut(span)) {
            for (k, &pos) in win.iter().enumerate() {
                slot[k * self.d_in..(k + 1) * self.d_in].copy_from_slice(x.row(pos));
            }
        }
        for (f, filter) in filters.chunks_exact(span).enumerate() {
            for (p, window) in gathered.chunks_exact(span).enumerate() {
                values.set(p, f, dot(filter, window));
            }
        }
        Ok(FeatureMap { values, windows })
    }

    /// Backward pass. Accumulates the filter gradient into `dfilters`
    /// (`n · width · d_in`, row-major) and returns the input gradient.
    pub fn backward(
        &self,
        x: &Matrix,
        map: &FeatureMap,
        dmap: &Matrix,
        dfilters: &mut [f64],
    ) -> Matrix {
        let span = self.width * self.d_in;
        let mut dx = Matrix::zeros(x.rows(), self.d_in);
        let mut gathered = vec![0.0; span];
        let mut dgathered = vec![0.0; span];
        let filters = self.filters.to_vec();
        for (p, win) in map.windows.iter().enumerate() {
            for (k, &pos) in win.iter().enumerate() {
                gathered[k * self.d_in..(k + 1) * self.d_in].copy_from_slice(x.row(pos));
            }
            dgathered.iter_mut().for_each(|v| *v = 0.0);
            for f in 0..self.filter_count() {
                let g = dmap.get(p, f);
                if g == 0.0 {
                    continue;
                }
                axpy(g, &gathered, &mut dfilters[f * span..(f + 1) * span]);
                axpy(g, &filters[f * span..(f + 1) * span], &mut dgathered);
            }
            for (k, &pos) in win.iter().enumerate() {
                axpy(
                    1.0,
                    &dgathered[k * self.d_in..(k + 1) * self.d_in],
                    dx.row_mut(pos),
                );
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_input() -> Matrix {
        // positions w1=(1,2), w2=(0,1), w3=(-1,0)
        Matrix::from_vec(3, 2, vec![1.0, 2.0, 0.0, 1.0, -1.0, 0.0])
    }

    fn example_filter(augmented: bool) -> FilterBank {
        // f1=(1,0), f2=(0,1)
        FilterBank::new(
            SharedTensor::from_vec(1, 4, vec![1.0, 0.0, 0.0, 1.0]),
            2,
            2,
            augmented,
        )
        .unwrap()
    }

    #[test]
    fn contiguous_example() {
        let m = example_filter(false).forward(&example_input()).unwrap();
        assert_eq!(m.values.column(0), vec![2.0, 0.0]);
        assert_eq!(m.windows, vec![vec![0, 1], vec![1, 2]]);
    }

    #[test]
    fn augmented_example() {
        let m = example_filter(true).forward(&example_input()).unwrap();
        assert_eq!(m.values.column(0), vec![2.0, 0.0, 1.0]);
        assert_eq!(m.windows[2], vec![0, 2]);
    }

    #[test]
    fn zero_filter_gives_zero_row() {
        let fb = FilterBank::new(SharedTensor::zeros(1, 4), 2, 2, true).unwrap();
        let m = fb.forward(&example_input()).unwrap();
        assert!(m.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_counts() {
        // width 2 over 4 positions: three bigrams, two skip-bigrams
        let w = conv_windows(4, 2, true);
        assert_eq!(
            w,
            vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 2], vec![1, 3]]
        );
        assert_eq!(conv_windows(5, 3, true).len(), 3 + 2 * 2);
        assert_eq!(conv_windows(3, 3, true).len(), 1);
        assert_eq!(conv_windows(4, 1, true).len(), 4);
        assert!(conv_windows(1, 2, false).is_empty());
    }

    #[test]
    fn rejects_bad_shapes() {
        let fb = example_filter(false);
        assert!(fb.forward(&Matrix::zeros(3, 3)).is_err());
        assert!(fb.forward(&Matrix::zeros(1, 2)).is_err());
        assert!(FilterBank::new(SharedTensor::zeros(1, 3), 2, 2, false).is_err());
    }
}
