//! Normal and Beta distribution functions used by inference and simulation.

use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{RdError, Result};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile for `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(RdError::Domain(format!("probability must lie in (0, 1), got {p}")));
    }
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // One Newton step on the lower tail of whichever side `x` is on.
    let (tail, q) = if x <= 0.0 { (normal_cdf(x), p) } else { (normal_cdf(-x), 1.0 - p) };
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let step = (tail - q) / density;
    Ok(if x <= 0.0 { x - step } else { x + step })
}

pub fn beta_pdf(a: f64, b: f64, z: f64) -> f64 {
    if !(0.0..=1.0).contains(&z) {
        return 0.0;
    }
    ((a - 1.0) * z.ln() + (b - 1.0) * (1.0 - z).ln() - ln_beta(a, b)).exp()
}

pub fn beta_cdf(a: f64, b: f64, z: f64) -> f64 {
    beta_reg(a, b, z.clamp(0.0, 1.0))
}

pub fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    inv_beta_reg(a, b, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantiles() {
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.95).unwrap() - 1.644_853_626_951_472_2).abs() < 1e-12);
        assert!(normal_quantile(0.5).unwrap().abs() < 1e-15);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        for &p in &[1e-8, 0.01, 0.3, 0.77, 0.999] {
            assert!((normal_cdf(normal_quantile(p).unwrap()) - p).abs() < 1e-12 * p.max(1e-3));
        }
    }

    #[test]
    fn beta_functions() {
        assert!((beta_cdf(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((beta_quantile(1.0, 1.0, 0.3) - 0.3).abs() < 1e-12);
        // Beta(2,4) density at 1/2: 20 z (1-z)^3.
        assert!((beta_pdf(2.0, 4.0, 0.5) - 1.25).abs() < 1e-12);
        for &p in &[0.01, 0.2, 0.5, 0.9] {
            let z = beta_quantile(14.0, 7.0, p);
            assert!((beta_cdf(14.0, 7.0, z) - p).abs() < 1e-10);
        }
    }
}
