//! Interior constant of the asymptotically optimal bandwidth for estimating
//! the `ν`-th derivative of a regression function with a degree-`ρ` local
//! polynomial.
//!
//! With moment matrix `S = (μ_{j+l})_{0≤j,l≤ρ}` the equivalent kernel is
//! `K*_ν(t) = e_νᵀ S⁻¹ (1, t, …, t^ρ)ᵀ K(t)` and
//!
//! ```text
//! C(ν, ρ, K) = [ ((ρ+1)!)² (2ν+1) ∫K*_ν² / ( 2(ρ+1-ν) (∫ t^{ρ+1} K*_ν)² ) ]^{1/(2ρ+3)}
//! ```

use nalgebra::{DMatrix, DVector};

use super::Kernel;
use crate::error::{RdError, Result};
use crate::quadrature::{integrate_split, ABS_TOL};

/// `(∫ K*_ν², ∫ t^{ρ+1} K*_ν)` for the equivalent kernel.
pub fn equivalent_kernel_moments(nu: u32, rho: u32, kernel: Kernel) -> Result<(f64, f64)> {
    if nu > rho {
        return Err(RdError::Domain(format!("derivative order {nu} exceeds polynomial degree {rho}")));
    }
    let dim = rho as usize + 1;
    let r = kernel.radius();
    let breaks = kernel.breakpoints();
    let mut mu = Vec::with_capacity(2 * dim + 1);
    let mut mu_sq = Vec::with_capacity(2 * dim - 1);
    for k in 0..=(2 * dim) {
        mu.push(integrate_split(|t| t.powi(k as i32) * kernel.weight(t), -r, r, breaks, ABS_TOL * 1e-2)?);
    }
    for k in 0..(2 * dim - 1) {
        mu_sq.push(integrate_split(
            |t| t.powi(k as i32) * kernel.weight(t).powi(2),
            -r,
            r,
            breaks,
            ABS_TOL * 1e-2,
        )?);
    }
    let s = DMatrix::from_fn(dim, dim, |j, l| mu[j + l]);
    let mut e = DVector::zeros(dim);
    e[nu as usize] = 1.0;
    let coef = s
        .lu()
        .solve(&e)
        .ok_or_else(|| RdError::Numerical("singular kernel moment matrix".into()))?;
    let mut sq = 0.0;
    for j in 0..dim {
        for l in 0..dim {
            sq += coef[j] * coef[l] * mu_sq[j + l];
        }
    }
    let lead: f64 = (0..dim).map(|k| coef[k] * mu[k + dim]).sum();
    Ok((sq, lead))
}

pub fn fan_gijbels_constant(nu: u32, rho: u32, kernel: Kernel) -> Result<f64> {
    if (rho - nu.min(rho)) % 2 == 0 {
        return Err(RdError::Domain(format!(
            "rho - nu must be odd for the interior constant (nu = {nu}, rho = {rho})"
        )));
    }
    let (sq, lead) = equivalent_kernel_moments(nu, rho, kernel)?;
    let fact: f64 = (1..=rho + 1).map(f64::from).product();
    let num = fact * fact * (2 * nu + 1) as f64 * sq;
    let den = 2.0 * (rho + 1 - nu) as f64 * lead * lead;
    Ok((num / den).powf(1.0 / (2 * rho + 3) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_linear_level_matches_textbook() {
        // ν = 0, ρ = 1: C = (R(K) / μ₂²)^{1/5}.
        let c = fan_gijbels_constant(0, 1, Kernel::Epanechnikov).unwrap();
        assert!((c - 15f64.powf(0.2)).abs() < 1e-9);
        let g = fan_gijbels_constant(0, 1, Kernel::Gaussian).unwrap();
        let expect = (1.0 / (2.0 * std::f64::consts::PI.sqrt())).powf(0.2);
        assert!((g - expect).abs() < 1e-8);
    }

    #[test]
    fn local_quadratic_slope_equivalent_kernel() {
        // For ν = 1, ρ = 2 the equivalent kernel is t K(t) / μ₂.
        let k = Kernel::Uniform;
        let (sq, lead) = equivalent_kernel_moments(1, 2, k).unwrap();
        let mu2 = 1.0 / 3.0;
        let mu4 = 1.0 / 5.0;
        assert!((lead - mu4 / mu2).abs() < 1e-10);
        // ∫ t² K² / μ₂² with K = 1/2 on [-1,1]: (1/6) / (1/9)
        assert!((sq - 1.5).abs() < 1e-10);
    }

    #[test]
    fn even_gap_rejected() {
        assert!(fan_gijbels_constant(1, 3, Kernel::Uniform).is_err());
    }
}
