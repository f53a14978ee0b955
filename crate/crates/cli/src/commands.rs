use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use rdple::bandwidth::{IkDiagnostics, SmDiagnostics};
use rdple::estimate::{choose_bandwidth, ple_estimate, BandwidthChoice, BandwidthRule, EstimateConfig};
use rdple::par::with_workers;
use rdple::simulation::metrics::compute_metrics;
use rdple::simulation::report::{metrics_csv, metrics_json, replications_csv};
use rdple::simulation::{dgp_sample, run_replications, DgpSpec, SimStudy};
use rdple::variance::VarianceMethod;
use rdple::{Kernel, Parallelism, RdDataset};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::SimConfig;
use crate::error::{CliError, CliResult};
use crate::input::read_columns;
use crate::output::{emit, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Treated {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Everything `estimate` reports. `tau_hat` and its interval always follow
/// the `μ⁺(c) - μ⁻(c)` convention; `effect*` restate them for the side named
/// by `treated`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub tau_hat: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub treated: Treated,
    pub effect: f64,
    pub effect_lower: f64,
    pub effect_upper: f64,
    pub degree: u32,
    pub kernel: Kernel,
    pub rule: BandwidthRule,
    pub variance_method: VarianceMethod,
    pub h_requested: f64,
    pub h_used: f64,
    pub floor_binding: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_min: Option<f64>,
    pub n: usize,
    pub n_in_window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sm: Option<SmDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ik: Option<IkDiagnostics>,
    pub seconds: f64,
}

pub struct DataArgs<'a> {
    pub input: &'a Path,
    pub x: &'a str,
    pub y: &'a str,
    pub cutoff: f64,
}

fn load(args: &DataArgs) -> CliResult<RdDataset> {
    if !args.cutoff.is_finite() {
        return Err(CliError::Usage(format!("cutoff must be finite, got {}", args.cutoff)));
    }
    let (x, y) = read_columns(args.input, args.x, args.y)?;
    Ok(RdDataset::new(x, y, args.cutoff)?)
}

fn mode(workers: usize) -> Parallelism {
    if workers == 1 {
        Parallelism::Sequential
    } else {
        Parallelism::Rayon
    }
}

/// `key,value` rows from a JSON object, nested keys joined with `.`.
pub fn flatten(value: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), v, out);
                }
            }
            Value::String(s) => out.push_str(&format!("{prefix},{s}\n")),
            Value::Null => out.push_str(&format!("{prefix},\n")),
            other => out.push_str(&format!("{prefix},{other}\n")),
        }
    }
    let mut out = String::from("field,value\n");
    walk("", value, &mut out);
    out
}

fn render<T: Serialize>(value: &T, format: Format) -> CliResult<String> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
            s.push('\n');
            s
        }
        Format::Csv => flatten(&v),
    })
}

pub fn estimate(
    data_args: &DataArgs,
    config: &EstimateConfig,
    treated: Treated,
    workers: usize,
    format: Format,
    out: Option<&Path>,
) -> CliResult<()> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    let data = load(data_args)?;
    let start = Instant::now();
    let est = with_workers(workers, || ple_estimate(&data, config, mode(workers)))?;
    let sign = match treated {
        Treated::Above => 1.0,
        Treated::Below => -1.0,
    };
    let (lo, hi) = (sign * est.ci.lower, sign * est.ci.upper);
    let record = ResultRecord {
        tau_hat: est.tau_hat,
        se: est.se,
        ci_lower: est.ci.lower,
        ci_upper: est.ci.upper,
        alpha: config.alpha,
        treated,
        effect: sign * est.tau_hat,
        effect_lower: lo.min(hi),
        effect_upper: lo.max(hi),
        degree: config.degree,
        kernel: config.kernel,
        rule: config.rule,
        variance_method: config.variance,
        h_requested: est.bandwidth.h_requested,
        h_used: est.bandwidth.h_used,
        floor_binding: est.bandwidth.floor_binding,
        h_min: est.bandwidth.h_min,
        n: est.n,
        n_in_window: est.n_in_window,
        sm: est.bandwidth.sm,
        ik: est.bandwidth.ik,
        seconds: start.elapsed().as_secs_f64(),
    };
    emit(out, &render(&record, format)?)
}

pub fn bandwidth(
    data_args: &DataArgs,
    degree: u32,
    kernel: Kernel,
    rule: BandwidthRule,
    format: Format,
    out: Option<&Path>,
) -> CliResult<()> {
    let data = load(data_args)?;
    let choice: BandwidthChoice = choose_bandwidth(&data, degree, kernel, rule)?;
    emit(out, &render(&choice, format)?)
}

pub fn dgp(id: u8, n: usize, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let spec = DgpSpec::paper(id)?;
    let data = dgp_sample(&spec, n, seed)?;
    let mut s = String::from("x,y,d\n");
    for (i, (x, y)) in data.x().iter().zip(data.y()).enumerate() {
        s.push_str(&format!("{x},{y},{}\n", u8::from(data.treated(i))));
    }
    emit(out, &s)
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a SimConfig,
    study: &'a SimStudy,
    workers: usize,
    replications: usize,
    common_success_count: usize,
    wall_time_seconds: f64,
    files: [&'static str; 3],
}

pub fn simulate(config_path: &Path, seed: Option<u64>, workers: usize, out: Option<PathBuf>) -> CliResult<()> {
    let mut config = SimConfig::load(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.output_dir = Some(o);
    }
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory: set output_dir in the config or pass --out".into()))?;
    let study = config.study()?;
    let start = Instant::now();
    let records = with_workers(workers, || run_replications(&study, mode(workers)))?;
    let table = compute_metrics(&study, &records)?;
    let wall = start.elapsed().as_secs_f64();

    write_atomic(&dir.join("metrics.csv"), &metrics_csv(&table))?;
    write_atomic(&dir.join("metrics.json"), &metrics_json(&table))?;
    write_atomic(&dir.join("replications.csv"), &replications_csv(&table, &records))?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: &config,
        study: &study,
        workers,
        replications: table.replications,
        common_success_count: table.common_success_count,
        wall_time_seconds: wall,
        files: ["metrics.csv", "metrics.json", "replications.csv"],
    };
    let mut m = serde_json::to_string_pretty(&json!(manifest)).expect("manifest serializes");
    m.push('\n');
    write_atomic(&dir.join("manifest.json"), &m)
}
