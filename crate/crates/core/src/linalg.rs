//! Row-major matrix type and the few dense routines the engine needs.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    ShapeMismatch {
        expected: usize,
        got: usize,
    },
    /// Regressor matrix is rank deficient (pivot below tolerance).
    RankDeficient {
        column: usize,
    },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected length {expected}, got {got}")
            }
            LinalgError::RankDeficient { column } => {
                write!(f, "rank-deficient system (pivot ~ 0 at column {column})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LinalgError {}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::ShapeMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// `selfᵀ * g`, used by backprop to push gradients to a layer's input.
    pub fn matvec_transpose(&self, g: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if g.len() != self.rows {
            return Err(LinalgError::ShapeMismatch {
                expected: self.rows,
                got: g.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let gv = g[r];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * gv;
            }
        }
        Ok(out)
    }

    /// Largest absolute eigenvalue, estimated by power iteration. Used only
    /// by tests and stationarity checks, so a fixed iteration budget is fine.
    pub fn spectral_radius_estimate(&self, iterations: usize) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return 0.0;
        }
        let mut v = vec![1.0; n];
        let mut radius = 0.0;
        for _ in 0..iterations {
            let w = self.matvec(&v).expect("square matrix");
            let norm = math::sqrt(w.iter().map(|x| x * x).sum::<f64>());
            if norm == 0.0 {
                return 0.0;
            }
            radius = norm / math::sqrt(v.iter().map(|x| x * x).sum::<f64>());
            v = w;
            let scale = 1.0 / norm;
            for x in v.iter_mut() {
                *x *= scale;
            }
        }
        radius
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// `b` holds one or more right-hand sides as columns.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::ShapeMismatch {
            expected: n,
            got: a.cols(),
        });
    }
    if b.rows() != n {
        return Err(LinalgError::ShapeMismatch {
            expected: n,
            got: b.rows(),
        });
    }
    let mut lhs = a.clone();
    let mut rhs = b.clone();
    let m = rhs.cols();

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = math::abs(lhs.get(col, col));
        for r in col + 1..n {
            let v = math::abs(lhs.get(r, col));
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val < 1e-12 {
            return Err(LinalgError::RankDeficient { column: col });
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = lhs.get(col, c);
                lhs.set(col, c, lhs.get(pivot_row, c));
                lhs.set(pivot_row, c, tmp);
            }
            for c in 0..m {
                let tmp = rhs.get(col, c);
                rhs.set(col, c, rhs.get(pivot_row, c));
                rhs.set(pivot_row, c, tmp);
            }
        }
        let pivot = lhs.get(col, col);
        for r in col + 1..n {
            let factor = lhs.get(r, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let v = lhs.get(r, c) - factor * lhs.get(col, c);
                lhs.set(r, c, v);
            }
            for c in 0..m {
                let v = rhs.get(r, c) - factor * rhs.get(col, c);
                rhs.set(r, c, v);
            }
        }
    }

    let mut x = Mat::zeros(n, m);
    for c in 0..m {
        for r in (0..n).rev() {
            let mut acc = rhs.get(r, c);
            for k in r + 1..n {
                acc -= lhs.get(r, k) * x.get(k, c);
            }
            x.set(r, c, acc / lhs.get(r, r));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_basics() {
        let m = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(
            m.matvec_transpose(&[1.0, 1.0]).unwrap(),
            vec![5.0, 7.0, 9.0]
        );
        assert!(m.matvec(&[1.0]).is_err());
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = Mat::from_vec(3, 3, vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let b_vec = a.matvec(&x_true).unwrap();
        let b = Mat::from_vec(3, 1, b_vec).unwrap();
        let x = solve(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x.get(i, 0) - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        let b = Mat::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            solve(&a, &b),
            Err(LinalgError::RankDeficient { .. })
        ));
    }

    #[test]
    fn spectral_radius_of_diagonal() {
        let a = Mat::from_vec(2, 2, vec![0.8, 0.0, 0.0, -0.3]).unwrap();
        let r = a.spectral_radius_estimate(100);
        assert!((r - 0.8).abs() < 1e-6);
    }
}
