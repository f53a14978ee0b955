//! Symmetric second-order kernels and the constants derived from them.

mod fan_gijbels;
mod porter;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};
use crate::quadrature::{self, ABS_TOL};

pub use fan_gijbels::{equivalent_kernel_moments, fan_gijbels_constant};
pub use porter::PorterFunctionals;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Radius beyond which the Gaussian kernel is treated as zero inside
/// quadrature (its mass there is below 1e-32).
pub(crate) const GAUSSIAN_RADIUS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Epanechnikov,
    Triangular,
    Uniform,
    Gaussian,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Epanechnikov,
        Kernel::Triangular,
        Kernel::Uniform,
        Kernel::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Triangular => "triangular",
            Kernel::Uniform => "uniform",
            Kernel::Gaussian => "gaussian",
        }
    }

    /// Support radius, `None` for unbounded support.
    pub fn support(self) -> Option<f64> {
        match self {
            Kernel::Gaussian => None,
            _ => Some(1.0),
        }
    }

    /// Radius used as the integration limit.
    pub(crate) fn radius(self) -> f64 {
        self.support().unwrap_or(GAUSSIAN_RADIUS)
    }

    /// Points where the kernel has a kink or jump, for splitting integrals.
    pub(crate) fn breakpoints(self) -> &'static [f64] {
        match self {
            Kernel::Epanechnikov | Kernel::Uniform => &[-1.0, 1.0],
            Kernel::Triangular => &[-1.0, 0.0, 1.0],
            Kernel::Gaussian => &[],
        }
    }

    /// Kernel weight at `u`. Zero outside the support.
    #[inline]
    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            Kernel::Epanechnikov => {
                if a <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Triangular => {
                if a <= 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
            Kernel::Uniform => {
                if a <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// Checked evaluation; rejects non-finite arguments.
    pub fn eval(self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(RdError::Domain(format!("kernel argument must be finite, got {u}")));
        }
        Ok(self.weight(u))
    }

    /// Kernel functionals, computed once per kernel and cached.
    pub fn functionals(self) -> Result<&'static KernelFunctionals> {
        static CACHE: [OnceLock<Result<KernelFunctionals>>; 4] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let slot = match self {
            Kernel::Epanechnikov => &CACHE[0],
            Kernel::Triangular => &CACHE[1],
            Kernel::Uniform => &CACHE[2],
            Kernel::Gaussian => &CACHE[3],
        };
        slot.get_or_init(|| kernel_functionals(self))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `∫ u^k K(u) du` over the support.
    pub fn moment(self, k: u32) -> Result<f64> {
        let r = self.radius();
        quadrature::integrate_split(
            |u| u.powi(k as i32) * self.weight(u),
            -r,
            r,
            self.breakpoints(),
            ABS_TOL,
        )
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            "triangular" | "tri" => Ok(Kernel::Triangular),
            "uniform" | "rectangular" => Ok(Kernel::Uniform),
            "gaussian" | "normal" => Ok(Kernel::Gaussian),
            other => Err(RdError::Domain(format!("unknown kernel '{other}'"))),
        }
    }
}

/// `C_FG(ν, ρ, K)` for one `(ν, ρ)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgConstant {
    pub nu: u32,
    pub rho: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFunctionals {
    pub kernel: Kernel,
    /// `∫ u² K(u) du`
    pub mu2: f64,
    /// `∫ K(u)² du`
    pub roughness: f64,
    pub porter: PorterFunctionals,
    /// Interior derivative-estimation constants for `(ν, ρ) ∈ {(1,2), (2,3), (3,4)}`.
    pub fg_constants: [FgConstant; 3],
}

impl KernelFunctionals {
    pub fn fg(&self, nu: u32) -> Result<f64> {
        self.fg_constants
            .iter()
            .find(|c| c.nu == nu)
            .map(|c| c.value)
            .ok_or_else(|| RdError::Domain(format!("no C_FG constant tabulated for nu = {nu}")))
    }
}

/// Computes all functionals of `kernel` by quadrature. Prefer
/// [`Kernel::functionals`], which caches the result.
pub fn kernel_functionals(kernel: Kernel) -> Result<KernelFunctionals> {
    let r = kernel.radius();
    let mu2 = kernel.moment(2)?;
    let roughness = quadrature::integrate_split(
        |u| kernel.weight(u).powi(2),
        -r,
        r,
        kernel.breakpoints(),
        ABS_TOL,
    )?;
    let porter = PorterFunctionals::compute(kernel)?;
    let mut fg_constants = [FgConstant { nu: 0, rho: 0, value: 0.0 }; 3];
    for (slot, nu) in fg_constants.iter_mut().zip(1u32..=3) {
        let rho = nu + 1;
        *slot = FgConstant {
            nu,
            rho,
            value: fan_gijbels_constant(nu, rho, kernel)?,
        };
    }
    Ok(KernelFunctionals {
        kernel,
        mu2,
        roughness,
        porter,
        fg_constants,
    })
}

/// Derivatives of the Gaussian kernel: order 0, 1 or 2.
pub fn gaussian_kernel_derivative(order: u32, u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(RdError::Domain(format!("kernel argument must be finite, got {u}")));
    }
    let k = FRAC_1_SQRT_2PI * (-0.5 * u * u).exp();
    match order {
        0 => Ok(k),
        1 => Ok(-u * k),
        2 => Ok((u * u - 1.0) * k),
        _ => Err(RdError::Domain(format!(
            "Gaussian kernel derivative of order {order} is not supported (0, 1 or 2)"
        ))),
    }
}

/// Probabilists' Hermite polynomial `He_s(x)`.
pub(crate) fn hermite(s: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if s == 0 {
        return prev;
    }
    for k in 1..s {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `s`-th derivative of the standard normal density: `(-1)^s He_s(x) φ(x)`.
pub(crate) fn gaussian_derivative_any(s: u32, x: f64) -> f64 {
    let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
    sign * hermite(s, x) * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}
