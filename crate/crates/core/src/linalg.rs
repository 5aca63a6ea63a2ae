//! Small dense solvers shared by the regression-based explainers.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Weighted normal equations `(Aᵀ W A, Aᵀ W y)` for a row-major design.
pub fn weighted_normal_equations(
    design: &[f64],
    rows: usize,
    cols: usize,
    weights: &[f64],
    target: &[f64],
) -> (DMatrix<f64>, Vec<f64>) {
    debug_assert_eq!(design.len(), rows * cols);
    let mut scaled = DMatrix::<f64>::zeros(rows, cols);
    for r in 0..rows {
        let s = weights[r].sqrt();
        for c in 0..cols {
            scaled[(r, c)] = design[r * cols + c] * s;
        }
    }
    let gram = scaled.tr_mul(&scaled);
    let mut rhs = vec![0.0; cols];
    for r in 0..rows {
        let wy = weights[r] * target[r];
        if wy == 0.0 {
            continue;
        }
        let row = &design[r * cols..(r + 1) * cols];
        for (acc, &a) in rhs.iter_mut().zip(row) {
            *acc += a * wy;
        }
    }
    (gram, rhs)
}

/// Solves `G x = b` for symmetric positive semi-definite `G` by Cholesky.
///
/// A pivot below `rel_tol * max(diag)` means the column is (numerically) in
/// the span of the previous ones and the system has no unique solution.
pub fn cholesky_solve(gram: &DMatrix<f64>, rhs: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let n = gram.nrows();
    assert_eq!(gram.ncols(), n);
    assert_eq!(rhs.len(), n);
    let max_diag = (0..n).map(|i| gram[(i, i)]).fold(0.0f64, f64::max);
    let threshold = rel_tol * max_diag.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = gram[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) {
            return Err(Error::RankDeficient { index: j });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = gram[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let g = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = cholesky_solve(&g, &[1.0, 2.0], 1e-12).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_rank_error() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            cholesky_solve(&g, &[1.0, 1.0], 1e-10),
            Err(Error::RankDeficient { index: 1 })
        ));
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v), 1.0);
    }

    #[test]
    fn normal_equations_match_direct_products() {
        let design = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let w = [1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0];
        let (g, b) = weighted_normal_equations(&design, 3, 2, &w, &y);
        assert!((g[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((g[(0, 1)] - 2.0).abs() < 1e-12);
        assert!((g[(1, 1)] - 5.0).abs() < 1e-12);
        assert!((b[0] - 5.0).abs() < 1e-12);
        assert!((b[1] - 13.0).abs() < 1e-12);
    }
}
