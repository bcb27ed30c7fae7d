//! Small dense linear algebra helpers. Dimensions here are the number of
//! risky assets, so everything is tiny and robustness wins over speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest condition number accepted before a matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse through a pivoted LU factorisation, refusing ill-conditioned input.
pub fn guarded_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    m.clone().lu().try_inverse().ok_or(Error::Singular { condition })
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l())
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidParams("matrix has no rows".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidParams("matrix rows have unequal length".into()));
    }
    Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
