//! Small dense matrices. Action counts are tiny, so everything is row-major
//! `Vec<f64>` with naive loops.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row vectors; all rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let mv = self.mul_vec(v);
        mv.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Frobenius inner product `⟨A, B⟩ = Σ a_kl b_kl`.
    pub fn frobenius(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|a| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a (numerically) singular system.
pub fn solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() || b.len() != n {
        return None;
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))?;
        if m[(pivot, col)].abs() <= scale * 1e-300 || m[(pivot, col)] == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot, j)];
                m[(pivot, j)] = tmp;
            }
            rhs.swap(col, pivot);
        }
        for i in col + 1..n {
            let factor = m[(i, col)] / m[(col, col)];
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(i, j)] -= factor * v;
            }
            rhs[i] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= m[(i, j)] * x[j];
        }
        x[i] = acc / m[(i, i)];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Stationary vector of a column-stochastic matrix (`Σ_i Π_ij = 1`), i.e. the
/// probability vector `x` with `Π x = x`.
///
/// Uses the Grassmann–Taksar–Heyman state reduction, which involves no
/// subtractions and keeps full relative accuracy in tiny components.
/// Requires an irreducible chain; a strictly positive matrix always is.
pub fn stationary_distribution(column_stochastic: &Matrix) -> Result<Vec<f64>> {
    let n = column_stochastic.rows();
    if !column_stochastic.is_square() || n == 0 {
        return Err(Error::DimensionMismatch {
            expected: column_stochastic.cols(),
            found: n,
        });
    }
    // Row-stochastic transition matrix: p[(j, i)] = probability of moving j -> i.
    let mut p = column_stochastic.transpose();
    for last in (1..n).rev() {
        let s: f64 = (0..last).map(|j| p[(last, j)]).sum();
        if !(s > 0.0) {
            return Err(Error::DegenerateGame("transition chain is reducible"));
        }
        for i in 0..last {
            p[(i, last)] /= s;
        }
        for i in 0..last {
            let pil = p[(i, last)];
            if pil == 0.0 {
                continue;
            }
            for j in 0..last {
                let v = p[(last, j)];
                p[(i, j)] += pil * v;
            }
        }
    }
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    for j in 1..n {
        x[j] = (0..j).map(|i| x[i] * p[(i, j)]).sum();
    }
    let total: f64 = x.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NonFinite("stationary distribution"));
    }
    x.iter_mut().for_each(|v| *v /= total);
    Ok(x)
}

/// Plain power iteration `x ← Π x / ‖Π x‖₁` for a nonnegative matrix, started
/// from `x0`. Stops when successive iterates differ by at most `tol` in the
/// max norm. Returns the final vector and the number of iterations used.
pub fn power_iteration(m: &Matrix, x0: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let mut x = x0.to_vec();
    for it in 0..max_iter {
        let mut y = m.mul_vec(&x);
        let s: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= s);
        let diff = y
            .iter()
            .zip(&x)
            .fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        x = y;
        if diff <= tol {
            return (x, it + 1);
        }
    }
    (x, max_iter)
}
