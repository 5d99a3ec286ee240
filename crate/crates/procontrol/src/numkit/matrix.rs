//! Dense row-major matrices and the Cholesky factorization.

use serde::{Deserialize, Serialize};

use super::NumError;

/// Dense matrix stored in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major values. Panics if the shape is empty or
    /// the value count does not match `rows × cols`.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix shape must be at least 1×1");
        assert_eq!(
            values.len(),
            rows * cols,
            "value count {} does not match {}×{}",
            values.len(),
            rows,
            cols
        );
        DenseMatrix { rows, cols, values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from a nested row list.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        assert!(r >= 1, "at least one row required");
        let c = rows[0].len();
        let mut values = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            values.extend_from_slice(row);
        }
        Self::new(r, c, values)
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    out.values[r * rhs.cols + c] += a * rhs.get(k, c);
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "vector length must match columns");
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let mut acc = 0.0;
            for c in 0..self.cols {
                acc += self.get(r, c) * v[c];
            }
            out[r] = acc;
        }
        out
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let values = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(self.rows, self.cols, values)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let values = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(a, b)| a - b)
            .collect();
        Self::new(self.rows, self.cols, values)
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * s).collect(),
        )
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Checks symmetry up to `tol` relative to the largest entry magnitude.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                if (self.get(r, c) - self.get(c, r)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Adds `jitter` to every diagonal entry, in place.
    pub fn add_jitter(&mut self, jitter: f64) {
        assert!(self.is_square());
        for i in 0..self.rows {
            let v = self.get(i, i);
            self.set(i, i, v + jitter);
        }
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: DenseMatrix,
}

impl Cholesky {
    /// Factors `a = L·Lᵀ`. Fails with [`NumError::NotPositiveDefinite`] as
    /// soon as a pivot drops to zero or below (singular or indefinite input)
    /// and with [`NumError::NotSymmetric`] when the input is visibly
    /// asymmetric (relative tolerance 1e-10).
    pub fn factor(a: &DenseMatrix) -> Result<Self, NumError> {
        if !a.is_square() {
            return Err(NumError::DimensionMismatch {
                context: format!("cholesky: {}×{} is not square", a.rows(), a.cols()),
            });
        }
        if !a.is_symmetric(1e-10) {
            return Err(NumError::NotSymmetric);
        }
        let n = a.rows();
        let mut lower = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut pivot = a.get(j, j);
            for k in 0..j {
                let l = lower.get(j, k);
                pivot -= l * l;
            }
            if pivot <= 0.0 || !pivot.is_finite() {
                return Err(NumError::NotPositiveDefinite { pivot_index: j });
            }
            let ljj = pivot.sqrt();
            lower.set(j, j, ljj);
            for i in (j + 1)..n {
                let mut acc = a.get(i, j);
                for k in 0..j {
                    acc -= lower.get(i, k) * lower.get(j, k);
                }
                lower.set(i, j, acc / ljj);
            }
        }
        Ok(Cholesky { lower })
    }

    /// The lower triangular factor `L`.
    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    /// Solves `A·X = B` via forward/back substitution.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        let n = self.lower.rows();
        if b.rows() != n {
            return Err(NumError::DimensionMismatch {
                context: format!("cholesky solve: rhs has {} rows, expected {}", b.rows(), n),
            });
        }
        let m = b.cols();
        // L·Y = B
        let mut y = DenseMatrix::zeros(n, m);
        for c in 0..m {
            for r in 0..n {
                let mut acc = b.get(r, c);
                for k in 0..r {
                    acc -= self.lower.get(r, k) * y.get(k, c);
                }
                y.set(r, c, acc / self.lower.get(r, r));
            }
        }
        // Lᵀ·X = Y
        let mut x = DenseMatrix::zeros(n, m);
        for c in 0..m {
            for r in (0..n).rev() {
                let mut acc = y.get(r, c);
                for k in (r + 1)..n {
                    acc -= self.lower.get(k, r) * x.get(k, c);
                }
                x.set(r, c, acc / self.lower.get(r, r));
            }
        }
        Ok(x)
    }

    /// Solves for a single right-hand-side vector.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>, NumError> {
        let x = self.solve(&DenseMatrix::column(b))?;
        Ok(x.values().to_vec())
    }
}

/// Solves `A·X = B` for symmetric positive-definite `A`.
pub fn cholesky_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, NumError> {
    Cholesky::factor(a)?.solve(b)
}

/// Gaussian elimination with partial pivoting for general square systems;
/// returns `None` when the matrix is numerically singular. Internal helper
/// for the Newton iterations (Jacobians are not symmetric).
pub(crate) fn solve_linear(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() || b.len() != n {
        return None;
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = m.get(col, col).abs();
        for r in (col + 1)..n {
            let v = m.get(r, col).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val < 1e-300 || !pivot_val.is_finite() {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = m.get(col, c);
                m.set(col, c, m.get(pivot_row, c));
                m.set(pivot_row, c, tmp);
            }
            rhs.swap(col, pivot_row);
        }
        for r in (col + 1)..n {
            let factor = m.get(r, col) / m.get(col, col);
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let v = m.get(r, c) - factor * m.get(col, c);
                m.set(r, c, v);
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in (r + 1)..n {
            acc -= m.get(r, c) * x[c];
        }
        x[r] = acc / m.get(r, r);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x)
}
