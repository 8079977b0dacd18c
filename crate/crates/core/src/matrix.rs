//! Dense row-major matrix with just the operations the factorization
//! pipeline needs.
//!
//! The data at hand is small (tens of features, hundreds of learners), so a
//! flat `Vec<f64>` with explicit loops beats pulling in a full linear-algebra
//! stack. Name metadata (feature names on rows, learner ids on columns) rides
//! along where it stays unambiguous and is dropped otherwise; it never
//! participates in numerics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: cannot multiply {lhs_rows}x{lhs_cols} by {rhs_rows}x{rhs_cols}")]
    DimensionMismatch {
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    BadDataLength { len: usize, rows: usize, cols: usize },
    #[error("{axis} name list has length {got}, expected {expected}")]
    BadNameLength {
        axis: &'static str,
        got: usize,
        expected: usize,
    },
}

/// Dense real matrix, row-major storage.
///
/// Immutable by convention: pipeline operations construct new matrices
/// rather than mutating in place, so a `Matrix` can be shared read-only
/// across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    row_names: Option<Vec<String>>,
    col_names: Option<Vec<String>>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::BadDataLength {
                len: data.len(),
                rows,
                cols,
            });
        }
        Ok(Matrix {
            rows,
            cols,
            data,
            row_names: None,
            col_names: None,
        })
    }

    /// Build from nested rows; rows must be non-ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            if r.len() != ncols {
                return Err(MatrixError::BadDataLength {
                    len: r.len(),
                    rows: nrows,
                    cols: ncols,
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(nrows, ncols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            row_names: None,
            col_names: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn with_row_names(mut self, names: Vec<String>) -> Result<Self, MatrixError> {
        if names.len() != self.rows {
            return Err(MatrixError::BadNameLength {
                axis: "row",
                got: names.len(),
                expected: self.rows,
            });
        }
        self.row_names = Some(names);
        Ok(self)
    }

    pub fn with_col_names(mut self, names: Vec<String>) -> Result<Self, MatrixError> {
        if names.len() != self.cols {
            return Err(MatrixError::BadNameLength {
                axis: "column",
                got: names.len(),
                expected: self.cols,
            });
        }
        self.col_names = Some(names);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_names(&self) -> Option<&[String]> {
        self.row_names.as_deref()
    }

    pub fn col_names(&self) -> Option<&[String]> {
        self.col_names.as_deref()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Select columns by index, duplicates allowed (used by the bootstrap
    /// resampler). Column names follow the selection.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, indices.len());
        for (jj, &j) in indices.iter().enumerate() {
            assert!(j < self.cols, "column index {j} out of range");
            for i in 0..self.rows {
                out.set(i, jj, self.get(i, j));
            }
        }
        out.row_names = self.row_names.clone();
        out.col_names = self
            .col_names
            .as_ref()
            .map(|names| indices.iter().map(|&j| names[j].clone()).collect());
        out
    }

    /// Standard matrix product. Carries `self`'s row names and `rhs`'s
    /// column names.
    pub fn multiply(&self, rhs: &Matrix) -> Result<Matrix, MatrixError> {
        if self.cols != rhs.rows {
            return Err(MatrixError::DimensionMismatch {
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
                rhs_cols: rhs.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a_ik = self.get(i, k);
                if a_ik == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a_ik * rhs.get(k, j);
                }
            }
        }
        out.row_names = self.row_names.clone();
        out.col_names = rhs.col_names.clone();
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out.row_names = self.col_names.clone();
        out.col_names = self.row_names.clone();
        out
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Entrywise difference; names are dropped (operands may disagree).
    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix, MatrixError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(MatrixError::DimensionMismatch {
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
                rhs_cols: rhs.cols,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix::from_vec(self.rows, self.cols, data)
    }

    pub fn is_non_negative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
