//! Small dense linear algebra: a row-major matrix, LU factorization with
//! partial pivoting, and a power-iteration estimate of the dominant
//! eigenvalue of a nonnegative matrix.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
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

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for i in 0..size {
            m.data[i * size + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row vectors. All rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Sub-matrix keeping the listed rows and columns, in the listed order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            let src = self.row(r);
            let dst = out.row_mut(i);
            for (d, &c) in dst.iter_mut().zip(cols) {
                *d = src[c];
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest absolute deviation of any row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.rows)
            .map(|r| (self.row(r).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// LU factorization `PA = LU` with partial (row) pivoting.
///
/// `L` has an implicit unit diagonal and shares storage with `U`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorizes a square matrix. A pivot column whose largest remaining
    /// magnitude is at or below `singular_tol` makes the matrix singular.
    pub fn factor(mut a: Matrix, singular_tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (pivot_row, pivot_abs) =
                (k..n)
                    .map(|r| (r, a.get(r, k).abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot_abs <= singular_tol {
                return Err(Error::Singular { column: k });
            }
            if pivot_row != k {
                for c in 0..n {
                    a.data.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = a.get(k, k);
            let (upper, lower) = a.data.split_at_mut((k + 1) * n);
            let pivot_tail = &upper[k * n + k + 1..(k + 1) * n];
            for row in lower.chunks_exact_mut(n) {
                if row[k] == 0.0 {
                    continue;
                }
                let factor = row[k] / pivot;
                row[k] = factor;
                for (x, &u) in row[k + 1..].iter_mut().zip(pivot_tail) {
                    *x -= factor * u;
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n, "right-hand side length");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..]
                .iter()
                .zip(&x[i + 1..])
                .map(|(u, y)| u * y)
                .sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

/// Result of [`power_iteration`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub estimate: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dominant eigenvalue of a square nonnegative matrix by repeated
/// multiplication from the all-ones vector with sup-norm normalization.
///
/// Convergence is only tested after a burn-in of `dim` steps (the longest
/// possible nilpotent transient). It then requires the step change and its
/// geometric tail estimate `d * r / (1 - r)` (with `r` the ratio of
/// successive changes) to fall below `tol`, or the change to reach rounding
/// level. Hitting `max_iters` returns the last estimate flagged as not
/// converged.
pub fn power_iteration(t: &Matrix, tol: f64, max_iters: usize) -> Result<PowerIteration> {
    if !t.is_square() {
        return Err(Error::Dimension(
            "power iteration needs a square matrix".into(),
        ));
    }
    if t.data.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Dimension(
            "power iteration needs a nonnegative matrix".into(),
        ));
    }
    if t.rows == 0 {
        return Ok(PowerIteration {
            estimate: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut v = vec![1.0; t.rows];
    let mut estimate = f64::NAN;
    let mut prev_change = f64::NAN;
    for it in 1..=max_iters {
        let w = t.mul_vec(&v);
        let norm = w.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        // v has unit sup-norm after the first step
        let next = norm / v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        if norm == 0.0 {
            return Ok(PowerIteration {
                estimate: 0.0,
                iterations: it,
                converged: true,
            });
        }
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / norm);
        let change = (next - estimate).abs();
        estimate = next;
        if it <= t.rows {
            prev_change = change;
            continue;
        }
        // a change at rounding level is as good as none; the tail estimate
        // would otherwise amplify this noise floor forever
        if change <= 4.0 * f64::EPSILON * estimate {
            return Ok(PowerIteration {
                estimate,
                iterations: it,
                converged: true,
            });
        }
        if change < tol && prev_change.is_finite() && prev_change > 0.0 {
            let ratio = (change / prev_change).min(1.0 - 1e-9);
            if change * ratio / (1.0 - ratio) < tol {
                return Ok(PowerIteration {
                    estimate,
                    iterations: it,
                    converged: true,
                });
            }
        }
        prev_change = change;
    }
    Ok(PowerIteration {
        estimate,
        iterations: max_iters,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_with_row_swaps() {
        let a = Matrix::from_rows(&[
            vec![0.0, 2.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![3.0, 0.0, 1.0],
        ])
        .unwrap();
        let x = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        let got = Lu::factor(a, 0.0).unwrap().solve(&b);
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-14, "{g} vs {e}");
        }
    }

    #[test]
    fn lu_reports_singular_column() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            Lu::factor(a, 1e-12),
            Err(Error::Singular { column: 1 })
        ));
    }

    #[test]
    fn power_iteration_trivial_cases() {
        let zero = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(power_iteration(&zero, 1e-12, 10).unwrap().estimate, 0.0);
        let one = Matrix::from_rows(&[vec![0.9]]).unwrap();
        let r = power_iteration(&one, 1e-12, 10).unwrap();
        assert!(r.converged);
        assert!((r.estimate - 0.9).abs() < 1e-15);
    }

    #[test]
    fn power_iteration_triangular_matches_largest_diagonal() {
        let t = Matrix::from_rows(&[
            vec![0.5, 0.0, 0.0],
            vec![0.2, 0.7, 0.0],
            vec![0.1, 0.1, 0.6],
        ])
        .unwrap();
        let r = power_iteration(&t, 1e-13, 100_000).unwrap();
        assert!(r.converged);
        assert!((r.estimate - 0.7).abs() < 1e-11);
    }

    #[test]
    fn power_iteration_flags_non_convergence() {
        // rotation-like matrix whose ratio never settles
        let t = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = power_iteration(&t, 1e-12, 5).unwrap();
        assert_eq!(r.estimate, 1.0);
        let slow = Matrix::from_rows(&[vec![0.999, 0.0], vec![1.0, 0.998]]).unwrap();
        let r = power_iteration(&slow, 1e-15, 5).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 5);
    }

    #[test]
    fn power_iteration_survives_flat_transient() {
        // T·1 = 1 on the first rows for several steps before decaying
        let t = Matrix::from_rows(&[
            vec![0.5, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let r = power_iteration(&t, 1e-13, 10_000).unwrap();
        assert!(r.converged);
        assert!((r.estimate - 0.5).abs() < 1e-12, "{}", r.estimate);
    }
}
