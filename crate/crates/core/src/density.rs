//! Gaussian kernel density and density-derivative estimation with a
//! two-stage direct plug-in bandwidth.

use serde::{Deserialize, Serialize};

use crate::data::{mean, RdDataset};
use crate::error::{RdError, Result};
use crate::kernels::{gaussian_derivative_any, gaussian_kernel_derivative};

const SQRT_PI: f64 = 1.772_453_850_905_516;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// `f̂(c)` after flooring.
    pub f_c: f64,
    pub f1_c: f64,
    pub f2_c: f64,
    /// Bandwidths used for orders 0, 1, 2.
    pub bandwidths: [f64; 3],
    pub n: usize,
    /// Raw `f̂(c)` before the floor.
    pub f_c_raw: f64,
    pub floor: f64,
    pub floored: bool,
}

/// `(1/(n h^{1+r})) Σ K^{(r)}((point - x_i)/h)` with the Gaussian kernel.
pub fn kde_at(x_data: &[f64], point: f64, h: f64, derivative_order: u32) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(RdError::Domain(format!("bandwidth must be positive, got {h}")));
    }
    if derivative_order > 2 {
        return Err(RdError::Domain(format!(
            "density derivative order {derivative_order} not supported"
        )));
    }
    if x_data.is_empty() {
        return Err(RdError::InvalidData("no observations".into()));
    }
    let mut s = 0.0;
    for &x in x_data {
        s += gaussian_kernel_derivative(derivative_order, (point - x) / h)?;
    }
    Ok(s / (x_data.len() as f64 * h.powi(1 + derivative_order as i32)))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Normal-scale value of `ψ_s = ∫ f^{(s)} f` for even `s`.
fn psi_normal_scale(s: u32, sigma: f64) -> f64 {
    let sign = if (s / 2) % 2 == 0 { 1.0 } else { -1.0 };
    sign * factorial(s) / ((2.0 * sigma).powi(s as i32 + 1) * factorial(s / 2) * SQRT_PI)
}

/// `ψ̂_s(g) = n⁻² Σ_i Σ_j φ_g^{(s)}(X_i - X_j)`.
fn psi_hat(x: &[f64], s: u32, g: f64) -> f64 {
    let n = x.len();
    let mut off = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            off += gaussian_derivative_any(s, (x[i] - x[j]) / g);
        }
    }
    let diag = n as f64 * gaussian_derivative_any(s, 0.0);
    (diag + 2.0 * off) / ((n * n) as f64 * g.powi(s as i32 + 1))
}

/// AMSE-optimal pilot for `ψ_s` given a value of `ψ_{s+2}`.
fn psi_pilot(s: u32, psi_next: f64, n: usize) -> f64 {
    (2.0 * gaussian_derivative_any(s, 0.0) / (-psi_next * n as f64)).powf(1.0 / (s + 3) as f64)
}

/// Two-stage direct plug-in bandwidth for the `r`-th density derivative.
pub fn kde_bandwidth(x_data: &[f64], derivative_order: u32) -> Result<f64> {
    let n = x_data.len();
    if n < 4 {
        return Err(RdError::InvalidData(format!("plug-in bandwidth needs n ≥ 4, got {n}")));
    }
    let m = mean(x_data);
    let sigma = (x_data.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    if !(sigma > 0.0) {
        return Err(RdError::DegenerateInput("running variable has zero spread".into()));
    }
    let r = derivative_order;
    let target = 2 * r + 4;

    // Stage 1: ψ_{2r+6} with a pilot from the normal-scale ψ_{2r+8}.
    let mut psi = psi_normal_scale(target + 4, sigma);
    for s in [target + 2, target] {
        let g = psi_pilot(s, psi, n);
        let est = psi_hat(x_data, s, g);
        let ns = psi_normal_scale(s, sigma);
        // Keep the sign the functional must have; fall back to the
        // normal-scale value otherwise.
        psi = if est.is_finite() && est.signum() == ns.signum() && est != 0.0 {
            est
        } else {
            ns
        };
    }
    let roughness = factorial(2 * r) / (2f64.powi(2 * r as i32 + 1) * factorial(r) * SQRT_PI);
    let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
    let h = ((2 * r + 1) as f64 * roughness / (sign * psi * n as f64)).powf(1.0 / (2 * r + 5) as f64);
    if h.is_finite() && h > 0.0 {
        Ok(h)
    } else {
        Err(RdError::Numerical(format!("plug-in bandwidth for order {r} is {h}")))
    }
}

/// Density and its first two derivatives at the cutoff, each with its own
/// plug-in bandwidth. `f̂(c)` is floored at `1/(n · range(x))`.
pub fn density_at_cutoff(data: &RdDataset) -> Result<DensityEstimate> {
    let x = data.x();
    let c = data.cutoff();
    let mut bandwidths = [0.0; 3];
    let mut est = [0.0; 3];
    for r in 0..3u32 {
        let h = kde_bandwidth(x, r)?;
        bandwidths[r as usize] = h;
        est[r as usize] = kde_at(x, c, h, r)?;
    }
    let floor = 1.0 / (x.len() as f64 * data.range());
    let floored = est[0] < floor;
    Ok(DensityEstimate {
        f_c: est[0].max(floor),
        f1_c: est[1],
        f2_c: est[2],
        bandwidths,
        n: x.len(),
        f_c_raw: est[0],
        floor,
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::rng::CounterRng;

    fn beta_sample(a: f64, b: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut r = CounterRng::new(seed);
        (0..n).map(|_| 2.0 * r.beta(a, b) - 1.0).collect()
    }

    #[test]
    fn single_atom() {
        assert!((kde_at(&[0.0], 0.0, 1.0, 0).unwrap() - 0.398_942_280_4).abs() < 1e-10);
    }

    #[test]
    fn symmetric_data_has_zero_slope() {
        for &h in &[0.1, 0.7, 3.0] {
            assert!(kde_at(&[-0.4, 0.4], 0.0, h, 1).unwrap().abs() < 1e-16);
        }
    }

    #[test]
    fn bad_bandwidth() {
        assert!(kde_at(&[0.0, 1.0], 0.0, 0.0, 0).is_err());
        assert!(kde_at(&[0.0, 1.0], 0.0, -1.0, 0).is_err());
    }

    #[test]
    fn direct_sum_oracle() {
        let x = beta_sample(2.0, 4.0, 500, 11);
        let h = kde_bandwidth(&x, 0).unwrap();
        let oracle: f64 = x
            .iter()
            .map(|&xi| (-(0.0 - xi) * (0.0 - xi) / (2.0 * h * h)).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .sum::<f64>()
            / (500.0 * h);
        assert!((kde_at(&x, 0.0, h, 0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = beta_sample(2.0, 4.0, 300, 3);
        for &h in &[0.05, 0.2] {
            for &p in &[-0.6, -0.1, 0.0, 0.35] {
                let step = 1e-5 * h;
                for r in 0..2 {
                    let fd = (kde_at(&x, p + step, h, r).unwrap() - kde_at(&x, p - step, h, r).unwrap()) / (2.0 * step);
                    let an = kde_at(&x, p, h, r + 1).unwrap();
                    assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "r={r} p={p} {fd} {an}");
                }
            }
        }
    }

    #[test]
    fn scaling_equivariance() {
        let x = beta_sample(1.0, 1.0, 100, 5);
        let s = 2.5;
        let xs: Vec<f64> = x.iter().map(|v| v * s).collect();
        for r in 0..3 {
            let a = kde_at(&x, 0.1, 0.3, r).unwrap();
            let b = kde_at(&xs, 0.1 * s, 0.3 * s, r).unwrap();
            assert!((b - a * s.powi(-(1 + r as i32))).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn normal_sample_bandwidth_near_normal_reference() {
        let mut r = CounterRng::new(77);
        let x: Vec<f64> = (0..1000).map(|_| r.normal(0.0, 1.0)).collect();
        let m = mean(&x);
        let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 999.0).sqrt();
        let silverman = 1.06 * sd * 1000f64.powf(-0.2);
        let h0 = kde_bandwidth(&x, 0).unwrap();
        assert!((h0 / silverman - 1.0).abs() < 0.15, "{h0} vs {silverman}");
        let h2 = kde_bandwidth(&x, 2).unwrap();
        assert!(h0 < h2);
    }

    #[test]
    fn constant_sample_errors() {
        assert!(matches!(kde_bandwidth(&[1.0; 10], 0), Err(RdError::DegenerateInput(_))));
    }

    #[test]
    fn uniform_running_variable() {
        let x = beta_sample(1.0, 1.0, 2000, 21);
        let data = RdDataset::new(x, vec![0.0; 2000], 0.0).unwrap();
        let d = density_at_cutoff(&data).unwrap();
        assert!((d.f_c - 0.5).abs() < 0.05, "{}", d.f_c);
        assert!(!d.floored && d.bandwidths.iter().all(|&h| h > 0.0));
    }

    #[test]
    fn uniform_slope_centres_on_zero() {
        // A single f̂'(c) at n = 2000 has sampling sd near 0.16; the average
        // over independent samples must sit near zero.
        let reps = 20;
        let mean_f1: f64 = (0..reps)
            .map(|s| {
                let data = RdDataset::new(beta_sample(1.0, 1.0, 2000, 100 + s), vec![0.0; 2000], 0.0).unwrap();
                density_at_cutoff(&data).unwrap().f1_c
            })
            .sum::<f64>()
            / reps as f64;
        assert!(mean_f1.abs() <= 0.15, "{mean_f1}");
    }

    #[test]
    fn beta_2_4_density_at_cutoff() {
        let x = beta_sample(2.0, 4.0, 2000, 8);
        let data = RdDataset::new(x, vec![0.0; 2000], 0.0).unwrap();
        let d = density_at_cutoff(&data).unwrap();
        let analytic = 20.0 * 0.5 * 0.5f64.powi(3) / 2.0;
        assert!((d.f_c / analytic - 1.0).abs() < 0.10, "{}", d.f_c);
    }

    #[test]
    fn floor_applies_far_from_data() {
        let x = vec![-1.0, -0.99, -0.98, -0.97, 5.0];
        let data = RdDataset::new(x, vec![0.0; 5], 2.0).unwrap();
        let d = density_at_cutoff(&data).unwrap();
        assert!(d.f_c >= d.floor);
        assert!(d.f_c > 0.0);
    }
}
