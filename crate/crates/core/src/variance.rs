//! Variance estimators for `τ̂` and normal confidence intervals.
//!
//! With `S = Σ d̂²`, residuals `r` and leverages `w_i = d̂_i² / S`:
//!
//! ```text
//!     ple_wu        S⁻² Σ r_i² d̂_i² / (1 - w_i)
//!     hinkley       S⁻² Σ r_i² d̂_i² / (1 - 1/n)
//!     hinkley_orig  (n(n-1))⁻¹ Σ (n (1 - w_i)(τ̂ - τ̂_(i*)))²
//!     wu_orig       Σ (1 - w_i)(τ̂_(i*) - τ̂)²
//!     porter_plugin C_P1 (σ²₊ + σ²₋) / (4 f(c) n h)
//!     dpi           Σ M_i² σ̂²_i
//! ```
//!
//! `ple_wu` equals the Wu-weighted jackknife over residual pairs
//! `(ŷ_i, d̂_i)`. The `_orig` forms instead delete whole observations and
//! refit the smoother at the same bandwidth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{nn_variance, NN_NEIGHBOURS};
use crate::data::RdDataset;
use crate::density::{density_at_cutoff, DensityEstimate};
use crate::dist::normal_quantile;
use crate::error::{RdError, Result, Side};
use crate::par::{map_indices, Parallelism};
use crate::ple::{ple_fit, PleFit};
use crate::smoothing::LocPolyConfig;

const LEVERAGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    #[default]
    PleWu,
    Hinkley,
    HinkleyOrig,
    WuOrig,
    PorterPlugin,
    Dpi,
}

impl VarianceMethod {
    pub const ALL: [VarianceMethod; 6] = [
        VarianceMethod::PleWu,
        VarianceMethod::Hinkley,
        VarianceMethod::HinkleyOrig,
        VarianceMethod::WuOrig,
        VarianceMethod::PorterPlugin,
        VarianceMethod::Dpi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VarianceMethod::PleWu => "ple_wu",
            VarianceMethod::Hinkley => "hinkley",
            VarianceMethod::HinkleyOrig => "hinkley_orig",
            VarianceMethod::WuOrig => "wu_orig",
            VarianceMethod::PorterPlugin => "porter_plugin",
            VarianceMethod::Dpi => "dpi",
        }
    }
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VarianceMethod {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self> {
        VarianceMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| RdError::Domain(format!("unknown variance method '{s}'")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarianceDetails {
    pub max_leverage: f64,
    /// Number of delete-observation refits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_floored: Option<bool>,
    /// Mean of the per-observation neighbour variances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_nn_sigma2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub method: VarianceMethod,
    pub value: f64,
    pub se: f64,
    pub details: VarianceDetails,
}

impl VarianceEstimate {
    fn new(method: VarianceMethod, value: f64, fit: &PleFit, details: VarianceDetails) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(RdError::Numerical(format!("{method} variance is {value}")));
        }
        Ok(VarianceEstimate {
            method,
            value,
            se: value.sqrt(),
            details: VarianceDetails {
                max_leverage: max_leverage(fit),
                ..details
            },
        })
    }
}

fn max_leverage(fit: &PleFit) -> f64 {
    fit.leverage.iter().copied().fold(0.0, f64::max)
}

fn check_leverage(fit: &PleFit) -> Result<()> {
    match fit.leverage.iter().position(|&w| w >= 1.0 - LEVERAGE_TOL) {
        Some(index) => Err(RdError::LeverageDegenerate {
            index,
            leverage: fit.leverage[index],
        }),
        None => Ok(()),
    }
}

pub fn variance_ple_wu(fit: &PleFit) -> Result<VarianceEstimate> {
    check_leverage(fit)?;
    let s = fit.gram;
    let sum: f64 = (0..fit.n())
        .map(|i| fit.r[i].powi(2) * fit.d_resid[i].powi(2) / (1.0 - fit.leverage[i]))
        .sum();
    VarianceEstimate::new(VarianceMethod::PleWu, sum / (s * s), fit, VarianceDetails::default())
}

pub fn variance_hinkley(fit: &PleFit) -> Result<VarianceEstimate> {
    let n = fit.n() as f64;
    let s = fit.gram;
    let sum: f64 = (0..fit.n())
        .map(|i| fit.r[i].powi(2) / (1.0 - 1.0 / n) * fit.d_resid[i].powi(2))
        .sum();
    VarianceEstimate::new(VarianceMethod::Hinkley, sum / (s * s), fit, VarianceDetails::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeletionFlavor {
    Hinkley,
    Wu,
}

/// `τ̂_(i*)` for every deleted observation, refitting the smoother on the
/// remaining `n - 1` points with the full-data bandwidth.
pub fn delete_observation_estimates(
    data: &RdDataset,
    config: &LocPolyConfig,
    mode: Parallelism,
) -> Result<Vec<f64>> {
    map_indices(data.len(), mode, |i| {
        data.without(i)
            .and_then(|d| ple_fit(&d, config))
            .map(|f| f.tau_hat)
            .map_err(|e| RdError::DeletionInfeasible {
                index: i,
                source: Box::new(e),
            })
    })
    .into_iter()
    .collect()
}

pub fn variance_delete_observation(
    data: &RdDataset,
    config: &LocPolyConfig,
    fit: &PleFit,
    flavor: DeletionFlavor,
    mode: Parallelism,
) -> Result<VarianceEstimate> {
    let config = config.with_bandwidth(fit.h);
    let taus = delete_observation_estimates(data, &config, mode)?;
    combine_deletions(fit, &taus, flavor)
}

pub(crate) fn combine_deletions(fit: &PleFit, taus: &[f64], flavor: DeletionFlavor) -> Result<VarianceEstimate> {
    let n = fit.n() as f64;
    let w = &fit.leverage;
    let (method, value) = match flavor {
        DeletionFlavor::Hinkley => {
            let s: f64 = taus
                .iter()
                .zip(w)
                .map(|(t, wi)| (n * (1.0 - wi) * (fit.tau_hat - t)).powi(2))
                .sum();
            (VarianceMethod::HinkleyOrig, s / (n * (n - 1.0)))
        }
        DeletionFlavor::Wu => {
            let s: f64 = taus
                .iter()
                .zip(w)
                .map(|(t, wi)| (1.0 - wi) * (t - fit.tau_hat).powi(2))
                .sum();
            (VarianceMethod::WuOrig, s)
        }
    };
    VarianceEstimate::new(
        method,
        value,
        fit,
        VarianceDetails {
            refits: Some(taus.len()),
            ..VarianceDetails::default()
        },
    )
}

pub fn variance_porter_plugin(
    fit: &PleFit,
    density: &DensityEstimate,
    sigma2_minus: f64,
    sigma2_plus: f64,
) -> Result<VarianceEstimate> {
    if !(density.f_c > 0.0 && fit.h > 0.0) {
        return Err(RdError::Domain(format!(
            "Porter variance needs f(c) > 0 and h > 0, got {} and {}",
            density.f_c, fit.h
        )));
    }
    let porter = &fit.kernel.functionals()?.porter;
    let value = porter.asymptotic_variance(sigma2_minus, sigma2_plus, density.f_c, fit.n(), fit.h);
    VarianceEstimate::new(
        VarianceMethod::PorterPlugin,
        value,
        fit,
        VarianceDetails {
            sigma2_minus: Some(sigma2_minus),
            sigma2_plus: Some(sigma2_plus),
            f_c: Some(density.f_c),
            density_floored: Some(density.floored),
            ..VarianceDetails::default()
        },
    )
}

/// `σ̂²_i = k/(k+1) (ỹ_i - mean of ỹ over its k nearest neighbours)²` with
/// `ỹ = y - τ̂ D`. Neighbours are the `j` closest other observations by `|x|`
/// distance, plus any tied with the `j`-th; `k` is their count.
pub fn nn_residual_variances(data: &RdDataset, tau_hat: f64, j: usize) -> Result<Vec<f64>> {
    let n = data.len();
    if j == 0 || n <= j {
        return Err(RdError::Sparse {
            side: None,
            detail: format!("{n} observations, {j} neighbours per point requested"),
        });
    }
    let x = data.x();
    let adj: Vec<f64> = data
        .y()
        .iter()
        .enumerate()
        .map(|(i, y)| if data.treated(i) { y - tau_hat } else { *y })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));

    let mut out = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        let x0 = x[i];
        let (mut l, mut r) = (pos, pos + 1);
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut last = f64::NEG_INFINITY;
        loop {
            let dl = if l > 0 { x0 - x[order[l - 1]] } else { f64::INFINITY };
            let dr = if r < n { x[order[r]] - x0 } else { f64::INFINITY };
            let d = dl.min(dr);
            if d == f64::INFINITY || (count >= j && d > last) {
                break;
            }
            let k = if dl <= dr {
                l -= 1;
                order[l]
            } else {
                r += 1;
                order[r - 1]
            };
            sum += adj[k];
            count += 1;
            last = d;
        }
        let k = count as f64;
        out[i] = k / (k + 1.0) * (adj[i] - sum / k).powi(2);
    }
    Ok(out)
}

pub fn variance_dpi(data: &RdDataset, fit: &PleFit, j: usize) -> Result<VarianceEstimate> {
    let m = fit
        .linear_functional()
        .ok_or_else(|| RdError::Numerical("fit carries no smoother matrix".into()))?;
    let s2 = nn_residual_variances(data, fit.tau_hat, j)?;
    let value: f64 = m.iter().zip(&s2).map(|(mi, si)| mi * mi * si).sum();
    VarianceEstimate::new(
        VarianceMethod::Dpi,
        value,
        fit,
        VarianceDetails {
            mean_nn_sigma2: Some(s2.iter().sum::<f64>() / s2.len() as f64),
            ..VarianceDetails::default()
        },
    )
}

/// Any variance method for a fit of `data`. Plug-ins the method needs are
/// computed here.
pub fn estimate_variance(
    method: VarianceMethod,
    data: &RdDataset,
    config: &LocPolyConfig,
    fit: &PleFit,
    mode: Parallelism,
) -> Result<VarianceEstimate> {
    match method {
        VarianceMethod::PleWu => variance_ple_wu(fit),
        VarianceMethod::Hinkley => variance_hinkley(fit),
        VarianceMethod::HinkleyOrig => variance_delete_observation(data, config, fit, DeletionFlavor::Hinkley, mode),
        VarianceMethod::WuOrig => variance_delete_observation(data, config, fit, DeletionFlavor::Wu, mode),
        VarianceMethod::PorterPlugin => {
            let density = density_at_cutoff(data)?;
            let s2m = nn_variance(data, Side::Below, NN_NEIGHBOURS)?;
            let s2p = nn_variance(data, Side::Above, NN_NEIGHBOURS)?;
            variance_porter_plugin(fit, &density, s2m, s2p)
        }
        VarianceMethod::Dpi => variance_dpi(data, fit, NN_NEIGHBOURS),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub center: f64,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// `τ̂ ± z_{α/2} se`.
pub fn confidence_interval(tau_hat: f64, se: f64, alpha: f64) -> Result<ConfidenceInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RdError::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(se >= 0.0) {
        return Err(RdError::Domain(format!("standard error must be non-negative, got {se}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(ConfidenceInterval {
        lower: tau_hat - z * se,
        upper: tau_hat + z * se,
        alpha,
        center: tau_hat,
    })
}
