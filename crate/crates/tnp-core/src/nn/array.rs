//! Dense row-major `f64` matrices.
//!
//! Every value that flows through the differentiation tape is a matrix:
//! vectors are stored as `1 x n` rows and scalars as `1 x 1`. Keeping a single
//! layout avoids a zoo of rank-specific cases in the tape operations.

use serde::{Deserialize, Serialize};

/// A dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealArray {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealArray {
    /// Builds a matrix from row-major data. Panics if `data.len() != rows * cols`
    /// or either dimension is zero.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows > 0 && cols > 0, "RealArray dimensions must be positive");
        assert_eq!(
            data.len(),
            rows * cols,
            "RealArray data length {} does not match {rows}x{cols}",
            data.len()
        );
        Self { rows, cols, data }
    }

    /// An all-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    /// A `1 x n` row vector.
    pub fn row_vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(1, n, data)
    }

    /// An `n x 1` column vector.
    pub fn column_vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(n, 1, data)
    }

    /// A `1 x 1` matrix holding one value.
    pub fn scalar(value: f64) -> Self {
        Self::new(1, 1, vec![value])
    }

    /// Stacks equal-length rows into an `n x d` matrix. Panics on ragged input
    /// or an empty slice.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "from_rows requires at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "from_rows requires equal-length rows");
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Shape as `[rows, cols]`.
    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        debug_assert!(row < self.rows);
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// The single value of a `1 x 1` matrix. Panics otherwise.
    pub fn scalar_value(&self) -> f64 {
        assert!(
            self.rows == 1 && self.cols == 1,
            "scalar_value on a {}x{} matrix",
            self.rows,
            self.cols
        );
        self.data[0]
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
