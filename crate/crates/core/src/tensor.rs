//! Dense matrices for activations and lock-free shared parameter storage.

use std::sync::atomic::{AtomicU64, Ordering};

/// Row-major dense matrix used for activations and gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major values.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "ragged columns");
            for (i, &v) in col.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn add_at(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] += value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Dot product with eight independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (acc, &v) in y.iter_mut().zip(x) {
        *acc += alpha * v;
    }
}

/// A parameter tensor that many workers may read and write concurrently
/// without locks.
///
/// Each scalar lives in an `AtomicU64` holding the bits of an `f64` and is
/// accessed with relaxed ordering. Concurrent read-modify-write sequences
/// may lose updates or observe stale values; nothing else is guaranteed.
#[derive(Debug)]
pub struct SharedTensor {
    rows: usize,
    cols: usize,
    data: Box<[AtomicU64]>,
}

impl SharedTensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "tensor data length mismatch");
        SharedTensor {
            rows,
            cols,
            data: values
                .into_iter()
                .map(|v| AtomicU64::new(v.to_bits()))
                .collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get_flat(&self, idx: usize) -> f64 {
        f64::from_bits(self.data[idx].load(Ordering::Relaxed))
    }

    #[inline]
    pub fn set_flat(&self, idx: usize, value: f64) {
        self.data[idx].store(value.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.get_flat(row * self.cols + col)
    }

    #[inline]
    pub fn set(&self, row: usize, col: usize, value: f64) {
        self.set_flat(row * self.cols + col, value);
    }

    /// Dot product of row `row` with `x` (length `cols`).
    #[inline]
    pub fn row_dot(&self, row: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.cols);
        let base = row * self.cols;
        let mut acc = 0.0;
        for (k, &xv) in x.iter().enumerate() {
            acc += self.get_flat(base + k) * xv;
        }
        acc
    }

    /// Copies row `row` into `out`.
    pub fn read_row(&self, row: usize, out: &mut [f64]) {
        let base = row * self.cols;
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.get_flat(base + k);
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get_flat(i)).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.to_vec())
    }

    pub fn copy_from(&self, values: &[f64]) {
        assert_eq!(values.len(), self.len());
        for (i, &v) in values.iter().enumerate() {
            self.set_flat(i, v);
        }
    }
}

impl Clone for SharedTensor {
    fn clone(&self) -> Self {
        SharedTensor::from_vec(self.rows, self.cols, self.to_vec())
    }
}

impl PartialEq for SharedTensor {
    /// Bitwise comparison of shapes and values.
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.load(Ordering::Relaxed) == b.load(Ordering::Relaxed))
    }
}
