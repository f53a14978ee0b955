//! Monte Carlo harness: designs, replication engine, metrics and reports.

pub mod dgp;
pub mod engine;
pub mod metrics;
pub mod report;
pub mod rng;

pub use dgp::{dgp_mean, dgp_sample, solve_n_for_mbar, DgpSpec};
pub use engine::{run_replications, run_study, Estimator, MethodSpec, Outcome, ReplicationRecord, SimStudy};
pub use metrics::{MethodMetrics, MetricValue, MetricsTable};
