//! The partial linear estimator.
//!
//! With smoother matrix `L`, treatment vector `D` and `G = (I - L')D`,
//!
//! ```text
//!     τ̂ = (G'G)⁻¹ G'(I - L')Y
//! ```
//!
//! which is also the no-intercept least-squares slope of the residualized
//! response `ŷ = (I - L')Y` on the residualized treatment `d̂ = G`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::RdDataset;
use crate::error::{RdError, Result};
use crate::kernels::Kernel;
use crate::par::Parallelism;
use crate::smoothing::{LocPolyConfig, SmootherMatrix};

/// `G'G` must exceed `GRAM_TOL · n`.
pub const GRAM_TOL: f64 = 1e-12;
const BISECTION_STEPS: usize = 30;
const GROWTH: f64 = 1.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PleFit {
    pub tau_hat: f64,
    pub h: f64,
    pub degree: u32,
    pub kernel: Kernel,
    /// `d̂_i = d_i - Ê(D|x_i)`
    pub d_resid: Vec<f64>,
    /// `ŷ_i = y_i - Ê(Y|x_i)`
    pub y_resid: Vec<f64>,
    /// `r_i = ŷ_i - d̂_i τ̂`
    pub r: Vec<f64>,
    /// `w_i = d̂_i² / Σ d̂²`
    pub leverage: Vec<f64>,
    /// `Σ d̂_i² = G'G`
    pub gram: f64,
    #[serde(skip)]
    smoother: Option<Arc<SmootherMatrix>>,
}

impl PartialEq for PleFit {
    fn eq(&self, other: &Self) -> bool {
        self.tau_hat == other.tau_hat
            && self.h == other.h
            && self.degree == other.degree
            && self.kernel == other.kernel
            && self.d_resid == other.d_resid
            && self.y_resid == other.y_resid
            && self.r == other.r
            && self.leverage == other.leverage
            && self.gram == other.gram
    }
}

impl PleFit {
    /// A fit from residualized vectors alone, without a smoother matrix.
    pub fn from_parts(tau_hat: f64, h: f64, degree: u32, kernel: Kernel, d_resid: Vec<f64>, y_resid: Vec<f64>) -> Self {
        let gram: f64 = d_resid.iter().map(|d| d * d).sum();
        let r = y_resid.iter().zip(&d_resid).map(|(y, d)| y - d * tau_hat).collect();
        let leverage = d_resid.iter().map(|d| d * d / gram).collect();
        PleFit {
            tau_hat,
            h,
            degree,
            kernel,
            d_resid,
            y_resid,
            r,
            leverage,
            gram,
            smoother: None,
        }
    }

    pub fn n(&self) -> usize {
        self.d_resid.len()
    }

    pub fn smoother(&self) -> Option<&SmootherMatrix> {
        self.smoother.as_deref()
    }

    /// Row vector `M = (G'G)⁻¹ G'(I - L')`, so that `τ̂ = M Y`.
    pub fn linear_functional(&self) -> Option<Vec<f64>> {
        let l = self.smoother()?;
        Some(
            l.residualize_transposed(&self.d_resid)
                .into_iter()
                .map(|v| v / self.gram)
                .collect(),
        )
    }
}

pub fn ple_fit(data: &RdDataset, config: &LocPolyConfig) -> Result<PleFit> {
    ple_fit_with(data, config, Parallelism::Sequential)
}

pub fn ple_fit_with(data: &RdDataset, config: &LocPolyConfig, mode: Parallelism) -> Result<PleFit> {
    let l = SmootherMatrix::build(data, config, mode)?;
    fit_from_smoother(data, l)
}

pub(crate) fn fit_from_smoother(data: &RdDataset, l: SmootherMatrix) -> Result<PleFit> {
    let n = data.len();
    let d_resid = l.residualize(&data.treatment());
    let y_resid = l.residualize(data.y());
    let gram: f64 = d_resid.iter().map(|v| v * v).sum();
    let tol = GRAM_TOL * n as f64;
    if !(gram > tol) {
        return Err(RdError::DegenerateContrast { gram, tol });
    }
    let cross: f64 = d_resid.iter().zip(&y_resid).map(|(d, y)| d * y).sum();
    let tau_hat = cross / gram;
    let r = y_resid.iter().zip(&d_resid).map(|(y, d)| y - d * tau_hat).collect();
    let leverage = d_resid.iter().map(|d| d * d / gram).collect();
    let cfg = *l.config();
    Ok(PleFit {
        tau_hat,
        h: cfg.bandwidth,
        degree: cfg.degree,
        kernel: cfg.kernel,
        d_resid,
        y_resid,
        r,
        leverage,
        gram,
        smoother: Some(Arc::new(l)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthFloor {
    pub h_min: f64,
    /// Whether a requested bandwidth had to be raised to `h_min`.
    pub binding: bool,
}

impl BandwidthFloor {
    /// Bandwidth actually used for a request, and the floor with `binding` set.
    pub fn apply(self, requested: f64) -> (f64, BandwidthFloor) {
        if requested < self.h_min {
            (self.h_min, BandwidthFloor { binding: true, ..self })
        } else {
            (requested, BandwidthFloor { binding: false, ..self })
        }
    }
}

fn feasible(data: &RdDataset, degree: u32, kernel: Kernel, h: f64) -> bool {
    LocPolyConfig::new(degree, kernel, h)
        .and_then(|cfg| ple_fit(data, &cfg))
        .is_ok()
}

/// Smallest bandwidth for which [`ple_fit`] succeeds, found by bisection
/// between half the smallest gap between distinct `x` values (where every
/// window holds a single point and `G = 0`) and `range(x)`. The upper end is
/// first tightened by growing the lower bound geometrically until a fit
/// succeeds, which keeps most feasibility checks on narrow windows.
pub fn min_feasible_bandwidth(data: &RdDataset, degree: u32, kernel: Kernel) -> Result<BandwidthFloor> {
    let mut xs = data.x().to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(RdError::Unusable("all running-variable values are identical".into()));
    }
    let range = xs[xs.len() - 1] - xs[0];
    if !feasible(data, degree, kernel, range) {
        return Err(RdError::Unusable(format!(
            "no feasible fit even at h = range(x) = {range}"
        )));
    }
    let min_gap = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let mut lo = 0.5 * min_gap;
    if feasible(data, degree, kernel, lo) {
        return Ok(BandwidthFloor { h_min: lo, binding: false });
    }
    let mut hi = range;
    let mut probe = lo * GROWTH;
    while probe < range {
        if feasible(data, degree, kernel, probe) {
            hi = probe;
            break;
        }
        lo = probe;
        probe *= GROWTH;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if feasible(data, degree, kernel, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BandwidthFloor { h_min: hi, binding: false })
}
