//! One-sided kernel functionals of the partially linear RD estimator.
//!
//! For a symmetric kernel `K` with support radius `R` define the upper tail
//! moments
//!
//! ```text
//!     K_j(u) = ∫_u^R t^j K(t) dt,        j = 0, 1, 2.
//! ```
//!
//! With local-constant smoothing and the cutoff at `c`, the population
//! residualized treatment `d - E(D|x)` at `x = c + h v` is
//! `G(v) = sgn(v) K_0(|v|)` to leading order, and the first-order correction
//! coming from a sloped design density is `-h f'(c)/f(c) K_1(|v|)`.
//! The estimator is `τ̂ - τ ≈ Σ G_i [(I - L') (μ* + ε)]_i / Σ G_i²`, which
//! gives
//!
//! ```text
//!     bias      = h³ b_P
//!     b_P       = 2 K_2(0) (f(c) ∫_0^∞ K_0²)^{-1}
//!                   ( f'(c)/f(c) g_2(c) ∫_0^∞ K_1(v) dv  -  g_2'(c) ∫_0^∞ K_0(v) v dv )
//!     variance  = C_P1 (σ²₊(c) + σ²₋(c)) / (4 n h f(c))
//!     C_P1      = ∫_0^∞ a(v)² dv / (∫_0^∞ K_0(w)² dw)²
//!     a(v)      = G(v) - ∫ K(v - u) G(u) du
//! ```
//!
//! `a` is the population version of `(I - L) G`, the coefficient each error
//! term receives. `2 K_2(0) = μ₂(K)`, the second kernel moment.
//!
//! Every integral below is evaluated by adaptive quadrature with the kinks of
//! the integrand passed as breakpoints. The finite-`n` check of both
//! expansions lives in this crate's tests (`porter_asymptotics`).

use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::error::Result;
use crate::quadrature::{integrate_split, ABS_TOL};

const INNER_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PorterFunctionals {
    /// `∫_0^∞ K_0(w)² dw`
    pub k0_sq_integral: f64,
    /// `∫_0^∞ K_1(v) dv`
    pub k1_integral: f64,
    /// `∫_0^∞ K_0(v) v dv`
    pub k0_first_moment: f64,
    /// `K_2(0)`
    pub k2_at_zero: f64,
    /// Variance constant `C_P1`.
    pub cp1: f64,
}

/// Upper tail moment `K_j(u) = ∫_u^R t^j K(t) dt`.
pub(crate) fn tail_moment(kernel: Kernel, j: i32, u: f64) -> Result<f64> {
    let r = kernel.radius();
    if u >= r {
        return Ok(0.0);
    }
    let lo = u.max(-r);
    integrate_split(
        |t| t.powi(j) * kernel.weight(t),
        lo,
        r,
        kernel.breakpoints(),
        INNER_TOL,
    )
}

/// Leading-order residualized treatment `G(v) = sgn(v) K_0(|v|)`.
fn residual_treatment(kernel: Kernel, v: f64) -> Result<f64> {
    if v == 0.0 {
        // D(c) = 1 and E(D|c) = 1/2.
        return Ok(0.5);
    }
    let tail = tail_moment(kernel, 0, v.abs())?;
    Ok(v.signum() * tail)
}

/// `a(v) = G(v) - ∫ K(v - u) G(u) du`.
fn smoothed_residual(kernel: Kernel, v: f64) -> Result<f64> {
    let r = kernel.radius();
    let lo = (v - r).max(-r);
    let hi = (v + r).min(r);
    let mut breaks = vec![0.0, v];
    for b in kernel.breakpoints() {
        breaks.push(v + b);
    }
    // A failed inner integral surfaces as NaN, which the outer rule rejects.
    let smoothed = integrate_split(
        |u| kernel.weight(v - u) * residual_treatment(kernel, u).unwrap_or(f64::NAN),
        lo,
        hi,
        &breaks,
        1e-12,
    )?;
    Ok(residual_treatment(kernel, v)? - smoothed)
}

impl PorterFunctionals {
    pub fn compute(kernel: Kernel) -> Result<Self> {
        let r = kernel.radius();
        let inner = |j: i32| move |u: f64| tail_moment(kernel, j, u).unwrap_or(f64::NAN);
        let k0 = inner(0);
        let k1 = inner(1);
        let breaks = kernel.breakpoints();

        let k0_sq_integral = integrate_split(|w| k0(w).powi(2), 0.0, r, breaks, ABS_TOL)?;
        let k1_integral = integrate_split(&k1, 0.0, r, breaks, ABS_TOL)?;
        let k0_first_moment = integrate_split(|v| v * k0(v), 0.0, r, breaks, ABS_TOL)?;
        let k2_at_zero = tail_moment(kernel, 2, 0.0)?;

        let mut a_breaks = vec![0.0, r, 2.0 * r];
        a_breaks.extend(breaks.iter().map(|b| b.abs()));
        a_breaks.extend(breaks.iter().map(|b| b.abs() + r));
        let a_sq = integrate_split(
            |v| smoothed_residual(kernel, v).map(|a| a * a).unwrap_or(f64::NAN),
            0.0,
            2.0 * r,
            &a_breaks,
            ABS_TOL,
        )?;
        Ok(PorterFunctionals {
            k0_sq_integral,
            k1_integral,
            k0_first_moment,
            k2_at_zero,
            cp1: a_sq / (k0_sq_integral * k0_sq_integral),
        })
    }

    /// Asymptotic bias constant `b_P` given density and curvature plug-ins.
    pub fn bias_constant(&self, f: f64, f1: f64, g2: f64, g2_prime: f64) -> f64 {
        2.0 * self.k2_at_zero / (f * self.k0_sq_integral)
            * (f1 / f * g2 * self.k1_integral - g2_prime * self.k0_first_moment)
    }

    /// Asymptotic variance `C_P1 (σ²₊ + σ²₋) / (4 n h f)`.
    pub fn asymptotic_variance(&self, sigma2_minus: f64, sigma2_plus: f64, f: f64, n: usize, h: f64) -> f64 {
        self.cp1 * (sigma2_plus + sigma2_minus) / (4.0 * f * n as f64 * h)
    }
}
