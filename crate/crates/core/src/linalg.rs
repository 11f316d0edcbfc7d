//! Small dense helpers: a Cholesky factorization that reports the failing
//! pivot, triangular solves, and a few matrix predicates used throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L L'`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factor a symmetric matrix. Only the lower triangle is read.
    ///
    /// Fails with [`Error::NotPositiveDefinite`] carrying the zero-based index
    /// of the first pivot that is not strictly positive.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        Self::factor_with_floor(a, 0.0)
    }

    /// As [`Cholesky::factor`], but pivots must exceed `floor`.
    pub fn factor_with_floor(a: &DMatrix<f64>, floor: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!(
                "Cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d.is_nan() || d <= floor || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let s = (0..i).fold(b[i], |s, k| s - self.l[(i, k)] * b[k]);
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solve `L' x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let s = ((i + 1)..n).fold(b[i], |s, k| s - self.l[(k, i)] * b[k]);
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(x.as_mut_slice());
        self.solve_upper_in_place(x.as_mut_slice());
        x
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let s = col.as_mut_slice();
            self.solve_lower_in_place(s);
            self.solve_upper_in_place(s);
        }
        x
    }

    /// `A^{-1} = L^{-T} L^{-1}`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        // columns of L^{-1}
        let mut linv = DMatrix::<f64>::identity(n, n);
        for mut col in linv.column_iter_mut() {
            self.solve_lower_in_place(col.as_mut_slice());
        }
        let inv = linv.transpose() * &linv;
        symmetrize(&inv)
    }

    /// `log |A|`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `x' A^{-1} x` via one triangular solve.
    pub fn inv_quad_form(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        scratch.copy_from_slice(x);
        self.solve_lower_in_place(scratch);
        scratch.iter().map(|v| v * v).sum()
    }
}

/// `(A + A') / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Spectral condition number of a symmetric positive definite matrix.
pub fn spd_condition(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetrize(a).symmetric_eigen().eigenvalues.min()
}

/// Positive-semidefinite test with an absolute tolerance on the smallest
/// eigenvalue.
pub fn is_psd(a: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(a) >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reports_failing_pivot() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.9, 0.9, 1.0, -0.9, 0.9, -0.9, 1.0]);
        match Cholesky::factor(&a) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("expected definiteness error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_and_log_det() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let ch = Cholesky::factor(&a).unwrap();
        let inv = ch.inverse();
        let eye = &a * &inv;
        assert!((eye - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        assert!((ch.log_det() - 8.0_f64.ln()).abs() < 1e-14);
        let x = ch.solve(&DVector::from_vec(vec![1.0, 1.0]));
        assert!(((&a * x) - DVector::from_vec(vec![1.0, 1.0])).abs().max() < 1e-14);
    }

    #[test]
    fn inv_quad_form_matches_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let ch = Cholesky::factor(&a).unwrap();
        let mut scratch = [0.0; 2];
        let q = ch.inv_quad_form(&[1.0, 1.0], &mut scratch);
        assert!((q - 2.0 / 1.5).abs() < 1e-14);
    }
}
