//! Performance measures over the common-success replications, each with its
//! Monte Carlo standard error.
//!
//! With `R` common successes, estimates `τ̂_r` and model variances `V_r`:
//!
//! | measure      | estimate                         | MCSE                                               |
//! |--------------|----------------------------------|----------------------------------------------------|
//! | bias         | `mean(τ̂) - τ`                    | `EmpSE / √R`                                       |
//! | emp_se       | `√(Σ(τ̂ - mean τ̂)² / R)`           | `EmpSE / √(2(R-1))`                                |
//! | mse          | `mean((τ̂ - τ)²)`                 | `sd((τ̂ - τ)²) / √R`                                |
//! | mod_se       | `√mean(V)`                       | `√(var(V) / (4 R mean V))`                         |
//! | rel_e        | `100 (ModSE/EmpSE - 1)`          | `100 ModSE/EmpSE √(var V/(4R ModSE⁴) + 1/(2(R-1)))` |
//! | coverage     | share of intervals covering `τ`  | `√(p(1-p)/R)`                                      |
//! | median_width | median interval width            | order-statistic interval half-length / 1.96        |
//! | success_rate | successes over all replications  | `√(s(1-s)/R_all)`                                  |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};
use crate::simulation::engine::{MethodSpec, Outcome, ReplicationRecord, SimStudy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub estimate: f64,
    pub mcse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: MethodSpec,
    pub successes: usize,
    /// Failure counts keyed by error code.
    pub failures: BTreeMap<String, usize>,
    pub success_rate: MetricValue,
    pub mse: MetricValue,
    pub bias: MetricValue,
    pub emp_se: MetricValue,
    pub mean_h: MetricValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mod_se: Option<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_e: Option<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_width: Option<MetricValue>,
}

impl MethodMetrics {
    /// `(name, value)` pairs in report order.
    pub fn rows(&self) -> Vec<(&'static str, MetricValue)> {
        let mut out = vec![
            ("mse", self.mse),
            ("bias", self.bias),
            ("emp_se", self.emp_se),
        ];
        for (name, v) in [
            ("mod_se", self.mod_se),
            ("rel_e", self.rel_e),
            ("coverage", self.coverage),
            ("median_width", self.median_width),
        ] {
            if let Some(v) = v {
                out.push((name, v));
            }
        }
        out.push(("success_rate", self.success_rate));
        out.push(("mean_h", self.mean_h));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub study: SimStudy,
    pub replications: usize,
    pub common_success_count: usize,
    pub methods: Vec<MethodMetrics>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with divisor `len - 1`.
fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn median_sorted(s: &[f64]) -> f64 {
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// MCSE of a sample median from the order statistics at
/// `R/2 ± 1.96 √R / 2`.
fn median_mcse(sorted: &[f64]) -> f64 {
    let r = sorted.len() as f64;
    let half = 1.96 * r.sqrt() / 2.0;
    let lo = ((r / 2.0 - half).floor() as isize).clamp(1, sorted.len() as isize) as usize;
    let hi = ((r / 2.0 + half).ceil() as isize).clamp(1, sorted.len() as isize) as usize;
    (sorted[hi - 1] - sorted[lo - 1]) / (2.0 * 1.96)
}

/// Measures from the estimates of one method on the common-success set.
pub fn summarize(
    tau: f64,
    estimates: &[f64],
    variances: Option<&[f64]>,
    intervals: Option<&[(f64, f64)]>,
) -> (MetricValue, MetricValue, MetricValue, Option<MetricValue>, Option<MetricValue>, Option<MetricValue>, Option<MetricValue>) {
    let r = estimates.len() as f64;
    let m = mean(estimates);
    let bias = m - tau;
    let emp_var = estimates.iter().map(|t| (t - m).powi(2)).sum::<f64>() / r;
    let emp_se = emp_var.sqrt();
    let sq_err: Vec<f64> = estimates.iter().map(|t| (t - tau).powi(2)).collect();
    let mse = mean(&sq_err);
    let mse_mcse = (var(&sq_err) / r).sqrt();

    let bias_v = MetricValue {
        estimate: bias,
        mcse: emp_se / r.sqrt(),
    };
    let emp_v = MetricValue {
        estimate: emp_se,
        mcse: emp_se / (2.0 * (r - 1.0)).sqrt(),
    };
    let mse_v = MetricValue {
        estimate: mse,
        mcse: mse_mcse,
    };
    let (mod_v, rel_v) = match variances {
        Some(v) => {
            let mv = mean(v);
            let mod_se = mv.sqrt();
            let vv = var(v);
            let ratio = mod_se / emp_se;
            (
                Some(MetricValue {
                    estimate: mod_se,
                    mcse: (vv / (4.0 * r * mv)).sqrt(),
                }),
                Some(MetricValue {
                    estimate: 100.0 * (ratio - 1.0),
                    mcse: 100.0 * ratio * (vv / (4.0 * r * mv * mv) + 1.0 / (2.0 * (r - 1.0))).sqrt(),
                }),
            )
        }
        None => (None, None),
    };
    let (cov_v, width_v) = match intervals {
        Some(ci) => {
            let p = ci.iter().filter(|(lo, hi)| *lo <= tau && tau <= *hi).count() as f64 / r;
            let mut widths: Vec<f64> = ci.iter().map(|(lo, hi)| hi - lo).collect();
            widths.sort_by(f64::total_cmp);
            (
                Some(MetricValue {
                    estimate: p,
                    mcse: (p * (1.0 - p) / r).sqrt(),
                }),
                Some(MetricValue {
                    estimate: median_sorted(&widths),
                    mcse: median_mcse(&widths),
                }),
            )
        }
        None => (None, None),
    };
    (mse_v, bias_v, emp_v, mod_v, rel_v, cov_v, width_v)
}

pub fn compute_metrics(study: &SimStudy, records: &[ReplicationRecord]) -> Result<MetricsTable> {
    let common: Vec<&ReplicationRecord> = records
        .iter()
        .filter(|r| r.outcomes.iter().all(Outcome::is_success))
        .collect();
    if common.is_empty() {
        return Err(RdError::EmptyResult);
    }
    let total = records.len() as f64;
    let tau = study.dgp.tau_true;
    let mut methods = Vec::with_capacity(study.methods.len());
    for (k, method) in study.methods.iter().enumerate() {
        let mut failures = BTreeMap::new();
        let mut successes = 0usize;
        for r in records {
            match &r.outcomes[k] {
                Outcome::Success { .. } => successes += 1,
                Outcome::Failure { code, .. } => *failures.entry(code.clone()).or_insert(0) += 1,
            }
        }
        let mut est = Vec::with_capacity(common.len());
        let mut hs = Vec::with_capacity(common.len());
        let mut vars = Vec::new();
        let mut cis = Vec::new();
        for r in &common {
            if let Outcome::Success { tau_hat, h, variance, ci } = &r.outcomes[k] {
                est.push(*tau_hat);
                hs.push(*h);
                if let Some(v) = variance {
                    vars.push(*v);
                }
                if let Some(c) = ci {
                    cis.push(*c);
                }
            }
        }
        let has_var = vars.len() == est.len();
        let has_ci = cis.len() == est.len();
        let (mse, bias, emp_se, mod_se, rel_e, coverage, median_width) = summarize(
            tau,
            &est,
            has_var.then_some(vars.as_slice()),
            has_ci.then_some(cis.as_slice()),
        );
        let s = successes as f64 / total;
        methods.push(MethodMetrics {
            method: *method,
            successes,
            failures,
            success_rate: MetricValue {
                estimate: s,
                mcse: (s * (1.0 - s) / total).sqrt(),
            },
            mse,
            bias,
            emp_se,
            mean_h: MetricValue {
                estimate: mean(&hs),
                mcse: (var(&hs) / hs.len() as f64).sqrt(),
            },
            mod_se,
            rel_e,
            coverage,
            median_width,
        });
    }
    Ok(MetricsTable {
        study: study.clone(),
        replications: records.len(),
        common_success_count: common.len(),
        methods,
    })
}
