//! Regression-discontinuity estimation with the partial linear estimator.

pub mod bandwidth;
pub mod data;
pub mod density;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod kernels;
pub mod linalg;
pub mod par;
pub mod ple;
pub mod quadrature;
pub mod simulation;
pub mod smoothing;
pub mod variance;

pub use data::RdDataset;
pub use error::{RdError, Result, Side};
pub use kernels::Kernel;
pub use par::Parallelism;
