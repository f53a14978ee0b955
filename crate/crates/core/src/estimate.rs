//! End-to-end PLE estimation: bandwidth rule, feasibility floor, fit,
//! variance and interval.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bandwidth::{ik_bandwidth, sm_bandwidth, IkDiagnostics, SmDiagnostics};
use crate::data::RdDataset;
use crate::error::{RdError, Result, StageExt};
use crate::kernels::Kernel;
use crate::par::Parallelism;
use crate::ple::{min_feasible_bandwidth, ple_fit_with, BandwidthFloor, PleFit};
use crate::smoothing::LocPolyConfig;
use crate::variance::{confidence_interval, estimate_variance, ConfidenceInterval, VarianceEstimate, VarianceMethod};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    Sm,
    Ik,
    Fixed(f64),
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthRule::Sm => f.write_str("sm"),
            BandwidthRule::Ik => f.write_str("ik"),
            BandwidthRule::Fixed(h) => write!(f, "fixed:{h}"),
        }
    }
}

impl FromStr for BandwidthRule {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sm" => Ok(BandwidthRule::Sm),
            "ik" => Ok(BandwidthRule::Ik),
            _ => {
                let h = s
                    .strip_prefix("fixed:")
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| RdError::Domain(format!("bandwidth rule must be sm, ik or fixed:<h>, got '{s}'")))?;
                if !(h > 0.0 && h.is_finite()) {
                    return Err(RdError::Domain(format!("fixed bandwidth must be positive, got {h}")));
                }
                Ok(BandwidthRule::Fixed(h))
            }
        }
    }
}

impl Serialize for BandwidthRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BandwidthRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub degree: u32,
    pub kernel: Kernel,
    pub rule: BandwidthRule,
    pub variance: VarianceMethod,
    pub alpha: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            degree: 1,
            kernel: Kernel::Epanechnikov,
            rule: BandwidthRule::Sm,
            variance: VarianceMethod::PleWu,
            alpha: 0.05,
        }
    }
}

/// A selected bandwidth before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub rule: BandwidthRule,
    pub h_requested: f64,
    pub h_used: f64,
    pub floor_binding: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sm: Option<SmDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ik: Option<IkDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleEstimate {
    pub tau_hat: f64,
    pub se: f64,
    pub ci: ConfidenceInterval,
    pub variance: VarianceEstimate,
    pub bandwidth: BandwidthChoice,
    pub n: usize,
    pub n_in_window: usize,
    #[serde(skip)]
    pub fit: Option<PleFit>,
}

/// Runs the bandwidth rule. SM results already carry the feasibility clamp;
/// IK and fixed requests are fitted as given unless infeasible, in which
/// case the minimum feasible bandwidth is used instead.
pub fn choose_bandwidth(data: &RdDataset, degree: u32, kernel: Kernel, rule: BandwidthRule) -> Result<BandwidthChoice> {
    let (requested, sm, ik) = match rule {
        BandwidthRule::Sm => {
            let sm = sm_bandwidth(data, kernel, degree)?;
            return Ok(BandwidthChoice {
                rule,
                h_requested: sm.h_unclamped,
                h_used: sm.h_sm,
                floor_binding: sm.clamps.floor_binding,
                h_min: Some(sm.h_min),
                sm: Some(sm),
                ik: None,
            });
        }
        BandwidthRule::Ik => {
            let ik = ik_bandwidth(data, kernel)?;
            (ik.h_ik, None, Some(ik))
        }
        BandwidthRule::Fixed(h) => (h, None, None),
    };
    Ok(BandwidthChoice {
        rule,
        h_requested: requested,
        h_used: requested,
        floor_binding: false,
        h_min: None,
        sm,
        ik,
    })
}

fn fit_with_floor(
    data: &RdDataset,
    degree: u32,
    kernel: Kernel,
    choice: &mut BandwidthChoice,
    mode: Parallelism,
) -> Result<PleFit> {
    let cfg = LocPolyConfig::new(degree, kernel, choice.h_used).stage("fit")?;
    match ple_fit_with(data, &cfg, mode) {
        Ok(fit) => Ok(fit),
        Err(RdError::DegenerateContrast { .. } | RdError::BandwidthTooSmall { .. }) if choice.h_min.is_none() => {
            let floor: BandwidthFloor = min_feasible_bandwidth(data, degree, kernel).stage("floor")?;
            let (h, floor) = floor.apply(choice.h_used);
            choice.h_min = Some(floor.h_min);
            choice.floor_binding = floor.binding;
            choice.h_used = h;
            ple_fit_with(data, &cfg.with_bandwidth(h), mode).stage("fit")
        }
        Err(e) => Err(e.at("fit")),
    }
}

/// Fits the PLE with a bandwidth chosen by `config.rule` and attaches the
/// requested variance estimate and interval.
pub fn ple_estimate(data: &RdDataset, config: &EstimateConfig, mode: Parallelism) -> Result<PleEstimate> {
    let mut choice = choose_bandwidth(data, config.degree, config.kernel, config.rule).stage("bandwidth")?;
    let fit = fit_with_floor(data, config.degree, config.kernel, &mut choice, mode)?;
    let cfg = LocPolyConfig::new(config.degree, config.kernel, fit.h).stage("fit")?;
    let variance = estimate_variance(config.variance, data, &cfg, &fit, mode).stage("variance")?;
    let ci = confidence_interval(fit.tau_hat, variance.se, config.alpha).stage("interval")?;
    let c = data.cutoff();
    let n_in_window = data.x().iter().filter(|&&x| (x - c).abs() <= fit.h).count();
    Ok(PleEstimate {
        tau_hat: fit.tau_hat,
        se: variance.se,
        ci,
        variance,
        bandwidth: choice,
        n: data.len(),
        n_in_window,
        fit: Some(fit),
    })
}
