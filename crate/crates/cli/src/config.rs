//! Flat TOML configuration for `simulate`.
//!
//! ```toml
//! dgp = 4
//! m_bar = 27            # or: n = 140
//! methods = ["ple1:sm:ple_wu", "ple1:ik:wu_orig", "lpe:sm"]
//! replications = 200
//! seed = 20261019
//! alpha = 0.05
//! kernel = "epanechnikov"
//! output_dir = "runs/dgp4"
//! # optional overrides of the design: beta_a, beta_b, noise_sd, tau_true, cutoff
//! ```

use std::path::{Path, PathBuf};

use rdple::simulation::{solve_n_for_mbar, DgpSpec, MethodSpec, SimStudy};
use rdple::Kernel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

const KEYS: &[&str] = &[
    "dgp",
    "n",
    "m_bar",
    "methods",
    "replications",
    "seed",
    "alpha",
    "kernel",
    "output_dir",
    "beta_a",
    "beta_b",
    "noise_sd",
    "tau_true",
    "cutoff",
];

fn default_alpha() -> f64 {
    0.05
}

fn default_kernel() -> Kernel {
    Kernel::Epanechnikov
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dgp: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_bar: Option<f64>,
    pub methods: Vec<String>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
}

fn config_error(message: impl Into<String>, keys: Vec<String>) -> CliError {
    CliError::Config {
        message: message.into(),
        keys,
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_error(e.message(), vec![]))?;
        let unknown: Vec<String> = table.keys().filter(|k| !KEYS.contains(&k.as_str())).cloned().collect();
        if !unknown.is_empty() {
            return Err(config_error(format!("unknown keys: {}", unknown.join(", ")), unknown));
        }
        toml::from_str(text).map_err(|e: toml::de::Error| {
            let keys = e.span().map(|s| key_at(text, s.start)).into_iter().flatten().collect();
            config_error(e.message().to_string(), keys)
        })
    }

    pub fn dgp_spec(&self) -> CliResult<DgpSpec> {
        let mut spec = DgpSpec::paper(self.dgp).map_err(|e| config_error(e.to_string(), vec!["dgp".into()]))?;
        spec.beta_a = self.beta_a.unwrap_or(spec.beta_a);
        spec.beta_b = self.beta_b.unwrap_or(spec.beta_b);
        spec.noise_sd = self.noise_sd.unwrap_or(spec.noise_sd);
        spec.tau_true = self.tau_true.unwrap_or(spec.tau_true);
        spec.cutoff = self.cutoff.unwrap_or(spec.cutoff);
        Ok(spec)
    }

    pub fn study(&self) -> CliResult<SimStudy> {
        let dgp = self.dgp_spec()?;
        let n = match (self.n, self.m_bar) {
            (Some(n), None) => n,
            (None, Some(m)) => solve_n_for_mbar(&dgp, m)?,
            _ => {
                return Err(config_error(
                    "exactly one of n and m_bar is required",
                    vec!["n".into(), "m_bar".into()],
                ))
            }
        };
        let methods = self
            .methods
            .iter()
            .map(|m| m.parse::<MethodSpec>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| config_error(e.to_string(), vec!["methods".into()]))?;
        let study = SimStudy {
            dgp,
            n,
            kernel: self.kernel,
            methods,
            replications: self.replications,
            alpha: self.alpha,
            master_seed: self.seed,
        };
        study.validate().map_err(|e| config_error(e.to_string(), vec![]))?;
        Ok(study)
    }
}

/// Top-level key on the line containing byte offset `pos`.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let start = text[..pos.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let key = line.split('=').next()?.trim();
    KEYS.contains(&key).then(|| key.to_string())
}
