//! Replication loop. Every method in a study sees the same dataset in each
//! replication; bandwidths and fits shared between methods are computed once
//! per replication.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bandwidth::sm_bandwidth;
use crate::data::RdDataset;
use crate::error::{RdError, Result, StageExt};
use crate::estimate::{choose_bandwidth, BandwidthRule};
use crate::kernels::Kernel;
use crate::par::{map_indices, Parallelism};
use crate::ple::{min_feasible_bandwidth, ple_fit, PleFit};
use crate::simulation::dgp::{dgp_sample, DgpSpec};
use crate::simulation::metrics::{compute_metrics, MetricsTable};
use crate::simulation::rng::replication_seed;
use crate::smoothing::{lpe_two_sided, LocPolyConfig};
use crate::variance::{confidence_interval, estimate_variance, VarianceMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Partial linear estimator with local polynomial degree `p`.
    Ple(u32),
    /// Two-sided local linear comparator; point estimate only.
    Lpe,
}

/// One compared method, written `ple<p>:<rule>:<variance>` or `lpe:<rule>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub estimator: Estimator,
    pub rule: BandwidthRule,
    pub variance: Option<VarianceMethod>,
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.estimator, self.variance) {
            (Estimator::Ple(p), Some(v)) => write!(f, "ple{p}:{}:{v}", self.rule),
            (Estimator::Ple(p), None) => write!(f, "ple{p}:{}", self.rule),
            (Estimator::Lpe, _) => write!(f, "lpe:{}", self.rule),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || RdError::Domain(format!("method must look like ple1:sm:ple_wu or lpe:ik, got '{s}'"));
        let (head, rest) = s.split_once(':').ok_or_else(bad)?;
        if head == "lpe" {
            let rule: BandwidthRule = rest.parse()?;
            return Ok(MethodSpec {
                estimator: Estimator::Lpe,
                rule,
                variance: None,
            });
        }
        let p: u32 = head.strip_prefix("ple").and_then(|d| d.parse().ok()).ok_or_else(bad)?;
        // The rule may itself contain a colon (fixed:<h>), so split the
        // variance method off the end.
        let (rule, variance) = match rest.rsplit_once(':') {
            Some((r, v)) if v.parse::<VarianceMethod>().is_ok() => (r, Some(v.parse()?)),
            _ => (rest, None),
        };
        Ok(MethodSpec {
            estimator: Estimator::Ple(p),
            rule: rule.parse()?,
            variance: Some(variance.unwrap_or_default()),
        })
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudy {
    pub dgp: DgpSpec,
    pub n: usize,
    pub kernel: Kernel,
    pub methods: Vec<MethodSpec>,
    pub replications: usize,
    pub alpha: f64,
    pub master_seed: u64,
}

impl SimStudy {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.replications == 0 {
            return Err(RdError::Domain("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(RdError::Domain("at least one method is required".into()));
        }
        if self.n < 4 {
            return Err(RdError::Domain(format!("sample size must be at least 4, got {}", self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RdError::Domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Result of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Success {
        tau_hat: f64,
        h: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        ci: Option<(f64, f64)>,
    },
    Failure {
        code: String,
        stage: Option<String>,
    },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }

    fn failure(e: &RdError) -> Outcome {
        Outcome::Failure {
            code: e.code().to_string(),
            stage: e.stage().map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub outcomes: Vec<Outcome>,
}

type FitKey = (u32, String);

struct ReplicationCache<'a> {
    data: &'a RdDataset,
    kernel: Kernel,
    h: HashMap<FitKey, Result<f64>>,
    fits: HashMap<FitKey, Result<PleFit>>,
    floors: HashMap<u32, Result<f64>>,
}

impl<'a> ReplicationCache<'a> {
    fn new(data: &'a RdDataset, kernel: Kernel) -> Self {
        ReplicationCache {
            data,
            kernel,
            h: HashMap::new(),
            fits: HashMap::new(),
            floors: HashMap::new(),
        }
    }

    fn floor(&mut self, degree: u32) -> Result<f64> {
        let (data, kernel) = (self.data, self.kernel);
        self.floors
            .entry(degree)
            .or_insert_with(|| min_feasible_bandwidth(data, degree, kernel).map(|f| f.h_min).stage("floor"))
            .clone()
    }

    fn bandwidth(&mut self, degree: u32, rule: BandwidthRule) -> Result<f64> {
        let key = (degree, rule.to_string());
        if let Some(h) = self.h.get(&key) {
            return h.clone();
        }
        let h = choose_bandwidth(self.data, degree, self.kernel, rule)
            .map(|c| c.h_used)
            .stage("bandwidth");
        self.h.insert(key, h.clone());
        h
    }

    fn fit(&mut self, degree: u32, rule: BandwidthRule) -> Result<PleFit> {
        let key = (degree, rule.to_string());
        if let Some(f) = self.fits.get(&key) {
            return f.clone();
        }
        let fit = self.fit_uncached(degree, rule);
        if let Ok(f) = &fit {
            self.h.insert(key.clone(), Ok(f.h));
        }
        self.fits.insert(key, fit.clone());
        fit
    }

    fn fit_uncached(&mut self, degree: u32, rule: BandwidthRule) -> Result<PleFit> {
        let h = self.bandwidth(degree, rule)?;
        let cfg = LocPolyConfig::new(degree, self.kernel, h).stage("fit")?;
        match ple_fit(self.data, &cfg) {
            Ok(f) => Ok(f),
            Err(RdError::DegenerateContrast { .. } | RdError::BandwidthTooSmall { .. })
                if rule != BandwidthRule::Sm =>
            {
                let h_min = self.floor(degree)?;
                ple_fit(self.data, &cfg.with_bandwidth(h.max(h_min))).stage("fit")
            }
            Err(e) => Err(e.at("fit")),
        }
    }

    fn lpe_bandwidth(&mut self, rule: BandwidthRule) -> Result<f64> {
        match rule {
            BandwidthRule::Sm => {
                let key = (u32::MAX, "sm".to_string());
                if let Some(h) = self.h.get(&key) {
                    return h.clone();
                }
                let h = sm_bandwidth(self.data, self.kernel, 1).map(|s| s.h_sm).stage("bandwidth");
                self.h.insert(key, h.clone());
                h
            }
            other => self.bandwidth(1, other),
        }
    }
}

fn run_method(cache: &mut ReplicationCache<'_>, method: &MethodSpec, alpha: f64) -> Outcome {
    let result = (|| -> Result<Outcome> {
        match method.estimator {
            Estimator::Lpe => {
                let h = cache.lpe_bandwidth(method.rule)?;
                let tau_hat = lpe_two_sided(cache.data, cache.kernel, h).stage("fit")?;
                Ok(Outcome::Success {
                    tau_hat,
                    h,
                    variance: None,
                    ci: None,
                })
            }
            Estimator::Ple(p) => {
                let fit = cache.fit(p, method.rule)?;
                let vm = method.variance.unwrap_or_default();
                let cfg = LocPolyConfig::new(p, cache.kernel, fit.h).stage("fit")?;
                let v = estimate_variance(vm, cache.data, &cfg, &fit, Parallelism::Sequential).stage("variance")?;
                let ci = confidence_interval(fit.tau_hat, v.se, alpha).stage("interval")?;
                Ok(Outcome::Success {
                    tau_hat: fit.tau_hat,
                    h: fit.h,
                    variance: Some(v.value),
                    ci: Some((ci.lower, ci.upper)),
                })
            }
        }
    })();
    match result {
        Ok(o @ Outcome::Success { tau_hat, .. }) if tau_hat.is_finite() => o,
        Ok(_) => Outcome::Failure {
            code: "numerical".into(),
            stage: Some("fit".into()),
        },
        Err(e) => Outcome::failure(&e),
    }
}

/// Runs replication `index` of `study`.
pub fn run_replication(study: &SimStudy, index: usize) -> ReplicationRecord {
    let seed = replication_seed(study.master_seed, index as u64);
    let outcomes = match dgp_sample(&study.dgp, study.n, seed) {
        Ok(data) => {
            let mut cache = ReplicationCache::new(&data, study.kernel);
            study
                .methods
                .iter()
                .map(|m| run_method(&mut cache, m, study.alpha))
                .collect()
        }
        Err(e) => vec![Outcome::failure(&e.at("sample")); study.methods.len()],
    };
    ReplicationRecord { index, seed, outcomes }
}

/// All replication records, in index order.
pub fn run_replications(study: &SimStudy, mode: Parallelism) -> Result<Vec<ReplicationRecord>> {
    study.validate()?;
    Ok(map_indices(study.replications, mode, |i| run_replication(study, i)))
}

pub fn run_study(study: &SimStudy, mode: Parallelism) -> Result<MetricsTable> {
    let records = run_replications(study, mode)?;
    compute_metrics(study, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study(methods: &[&str], reps: usize) -> SimStudy {
        SimStudy {
            dgp: DgpSpec::paper(4).unwrap(),
            n: 140,
            kernel: Kernel::Epanechnikov,
            methods: methods.iter().map(|m| m.parse().unwrap()).collect(),
            replications: reps,
            alpha: 0.05,
            master_seed: 11,
        }
    }

    #[test]
    fn method_spec_round_trip() {
        for s in ["ple1:sm:ple_wu", "ple0:ik:dpi", "ple1:fixed:0.5:wu_orig", "lpe:ik", "lpe:fixed:0.3"] {
            let m: MethodSpec = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!("ple1:sm".parse::<MethodSpec>().unwrap().variance, Some(VarianceMethod::PleWu));
        assert!("foo:sm".parse::<MethodSpec>().is_err());
        assert!("ple1:xx:ple_wu".parse::<MethodSpec>().is_err());
    }

    #[test]
    fn methods_share_each_dataset() {
        let s = study(&["ple1:fixed:0.4:ple_wu", "ple1:fixed:0.4:hinkley"], 3);
        let recs = run_replications(&s, Parallelism::Sequential).unwrap();
        for r in recs {
            match (&r.outcomes[0], &r.outcomes[1]) {
                (Outcome::Success { tau_hat: a, .. }, Outcome::Success { tau_hat: b, .. }) => assert_eq!(a, b),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn parallel_equals_sequential() {
        let s = study(&["ple1:sm:ple_wu", "lpe:ik"], 8);
        assert_eq!(
            run_replications(&s, Parallelism::Sequential).unwrap(),
            run_replications(&s, Parallelism::Rayon).unwrap()
        );
    }

    #[test]
    fn invalid_study() {
        let mut s = study(&["ple1:sm"], 0);
        assert!(run_study(&s, Parallelism::Sequential).is_err());
        s.replications = 2;
        s.methods.clear();
        assert!(run_study(&s, Parallelism::Sequential).is_err());
    }
}
