//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a column is treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Householder least squares for a full-column-rank `x`.
///
/// Returns the coefficients and `(X'X)^{-1}`.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::SingularDesign(format!("{n} rows cannot identify {p} coefficients")));
    }
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let qr = x.clone().qr();
    let r = qr.r();
    for k in 0..p {
        if norms[k] == 0.0 || r[(k, k)].abs() <= RANK_TOL * norms[k] {
            return Err(Error::SingularDesign(format!(
                "design column {k} is (numerically) a combination of earlier columns"
            )));
        }
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, p).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::SingularDesign("triangular inverse failed".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    Ok((beta, xtx_inv))
}

/// Checks that `x` has full column rank.
pub(crate) fn ensure_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let y = DVector::zeros(x.nrows());
    least_squares(x, &y).map(|_| ())
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix and its numerical rank.
pub(crate) fn symmetric_pinv(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max * (n as f64) * 1e-10;
    let mut inv = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > tol {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lambda;
        }
    }
    (inv, rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_collinear_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(ensure_full_rank(&x), Err(Error::SingularDesign(_))));
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(ensure_full_rank(&x).is_err());
    }

    #[test]
    fn pinv_of_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let a = &v * v.transpose();
        let (inv, rank) = symmetric_pinv(&a);
        assert_eq!(rank, 1);
        let back = &a * &inv * &a;
        assert!((back - a).norm() < 1e-10);
    }
}
