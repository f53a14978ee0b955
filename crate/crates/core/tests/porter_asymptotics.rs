//! Exact finite-sample bias and variance of the local-constant PLE on
//! deterministic designs against the leading-order expansions
//! `h³ b_P` and `C_P1 (σ²₊ + σ²₋) / (4 n h f(c))`.

use rdple::bandwidth::curvature_terms;
use rdple::ple::ple_fit;
use rdple::smoothing::LocPolyConfig;
use rdple::{Kernel, RdDataset};

/// Quantile grid of the density `(1 + a x)/2` on `[-1, 1]`.
fn design(n: usize, a: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64;
            if a == 0.0 {
                2.0 * u - 1.0
            } else {
                // F(x) = (x + 1)/2 + a (x² - 1)/4 = u
                let (qa, qb, qc) = (a / 4.0, 0.5, 0.5 - a / 4.0 - u);
                (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
            }
        })
        .collect()
}

/// Exact `E τ̂ - τ = M μ` and `Σ M_i²` for the local-constant fit.
fn exact(x: &[f64], mu: impl Fn(f64) -> f64, kernel: Kernel, h: f64) -> (f64, f64) {
    let y: Vec<f64> = x.iter().map(|&v| mu(v)).collect();
    let data = RdDataset::new(x.to_vec(), y, 0.0).unwrap();
    let fit = ple_fit(&data, &LocPolyConfig::new(0, kernel, h).unwrap()).unwrap();
    let m = fit.linear_functional().unwrap();
    let bias: f64 = m.iter().zip(x).map(|(mi, &xi)| mi * mu(xi)).sum();
    let sum_sq: f64 = m.iter().map(|v| v * v).sum();
    (bias, sum_sq)
}

fn check_bias(a: f64, mu: impl Fn(f64) -> f64 + Copy, derivs: [f64; 3], kernel: Kernel) {
    let f = 0.5;
    let f1 = a / 2.0;
    let (g2, g2p) = curvature_terms(derivs, f, f1, 0.0);
    let porter = kernel.functionals().unwrap().porter;
    let b_p = porter.bias_constant(f, f1, g2, g2p);
    assert!(b_p.abs() > 1e-8);
    let mut ratios = Vec::new();
    for h in [0.1, 0.05] {
        let x = design(8000, a);
        let (bias, _) = exact(&x, mu, kernel, h);
        ratios.push(bias / (h.powi(3) * b_p));
    }
    // The ratio approaches 1 as h shrinks and is already close at h = 0.05.
    assert!((ratios[1] - 1.0).abs() < 0.1, "{kernel:?} a={a}: ratios {ratios:?}");
    assert!((ratios[1] - 1.0).abs() <= (ratios[0] - 1.0).abs() + 0.02, "{kernel:?} a={a}: ratios {ratios:?}");
}

#[test]
fn bias_on_flat_design_is_driven_by_third_derivative() {
    for kernel in [Kernel::Epanechnikov, Kernel::Triangular, Kernel::Uniform] {
        check_bias(0.0, |x| x.powi(3), [0.0, 0.0, 6.0], kernel);
    }
}

#[test]
fn bias_on_sloped_design_includes_density_term() {
    for kernel in [Kernel::Epanechnikov, Kernel::Triangular] {
        check_bias(0.5, |x| x * x + 0.3 * x, [0.3, 2.0, 0.0], kernel);
    }
}

#[test]
fn variance_matches_cp1_formula() {
    for kernel in [Kernel::Epanechnikov, Kernel::Triangular, Kernel::Uniform] {
        let porter = kernel.functionals().unwrap().porter;
        for (n, h) in [(4000usize, 0.1), (8000, 0.05)] {
            let x = design(n, 0.0);
            let (_, sum_sq) = exact(&x, |_| 0.0, kernel, h);
            let sigma2 = 0.04;
            let exact_var = sigma2 * sum_sq;
            let asym = porter.asymptotic_variance(sigma2, sigma2, 0.5, n, h);
            assert!((exact_var / asym - 1.0).abs() < 0.05, "{kernel:?} n={n} h={h}: {exact_var} vs {asym}");
        }
    }
}
