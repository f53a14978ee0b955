//! Deterministic renderings of a [`MetricsTable`].

use crate::simulation::engine::ReplicationRecord;
use crate::simulation::engine::Outcome;
use crate::simulation::metrics::MetricsTable;

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NaN".into()
    }
}

/// One row per method and metric: `method,metric,estimate,mcse`.
pub fn metrics_csv(table: &MetricsTable) -> String {
    let mut out = String::from("method,metric,estimate,mcse\n");
    for m in &table.methods {
        for (name, v) in m.rows() {
            out.push_str(&format!("{},{name},{},{}\n", m.method, num(v.estimate), num(v.mcse)));
        }
    }
    out
}

pub fn metrics_json(table: &MetricsTable) -> String {
    let mut s = serde_json::to_string_pretty(table).expect("metrics serialize");
    s.push('\n');
    s
}

/// Long-format per-replication outcomes for plotting:
/// `replication,method,status,tau_hat,h,variance,lower,upper`.
pub fn replications_csv(table: &MetricsTable, records: &[ReplicationRecord]) -> String {
    let mut out = String::from("replication,method,status,tau_hat,h,variance,lower,upper\n");
    for r in records {
        for (m, o) in table.study.methods.iter().zip(&r.outcomes) {
            match o {
                Outcome::Success { tau_hat, h, variance, ci } => {
                    let v = variance.map(num).unwrap_or_default();
                    let (lo, hi) = ci.map(|(a, b)| (num(a), num(b))).unwrap_or_default();
                    out.push_str(&format!("{},{m},ok,{},{},{v},{lo},{hi}\n", r.index, num(*tau_hat), num(*h)));
                }
                Outcome::Failure { code, .. } => {
                    out.push_str(&format!("{},{m},{code},,,,,\n", r.index));
                }
            }
        }
    }
    out
}
