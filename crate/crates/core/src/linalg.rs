//! Small dense solvers used by the local and global polynomial fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{RdError, Result};

/// Local designs with a 1-norm condition estimate above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a symmetric positive definite matrix and its 1-norm condition
/// number. `None` when the Cholesky factorization fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let chol = m.clone().cholesky()?;
    let inv = chol.inverse();
    let cond = norm1(m) * norm1(&inv);
    if cond.is_finite() {
        Some((inv, cond))
    } else {
        None
    }
}

/// Ordinary least squares via SVD. Fails when the design is numerically
/// rank deficient (smallest/largest singular value below `1e-12`).
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = design.shape();
    if n < k {
        return Err(RdError::Rank(format!("{n} rows for {k} columns")));
    }
    // Equilibrate columns so the rank test is scale free.
    let scales: Vec<f64> = design
        .column_iter()
        .map(|c| c.norm())
        .map(|s| if s > 0.0 { s } else { 1.0 })
        .collect();
    let mut scaled = design.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < 1e-12 {
        return Err(RdError::Rank(format!(
            "singular values span [{smin:e}, {smax:e}]"
        )));
    }
    let beta = svd
        .solve(y, 0.0)
        .map_err(|e| RdError::Rank(e.to_string()))?;
    Ok(DVector::from_iterator(k, beta.iter().zip(&scales).map(|(b, s)| b / s)))
}
