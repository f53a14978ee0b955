//! The four simulation designs. Running variable `X = 2Z - 1` with
//! `Z ~ Beta(a, b)`, response `Y = μ(X) + ε`, `ε ~ N(0, 0.1295²)`, and a jump
//! of 0.1 at the cutoff 0.

use serde::{Deserialize, Serialize};

use crate::bandwidth::rot::expected_m;
use crate::data::RdDataset;
use crate::error::{RdError, Result};
use crate::simulation::rng::CounterRng;

pub const TAU_TRUE: f64 = 0.1;
pub const NOISE_SD: f64 = 0.1295;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    /// Selects the mean function, 1 to 4.
    pub id: u8,
    pub beta_a: f64,
    pub beta_b: f64,
    pub tau_true: f64,
    pub noise_sd: f64,
    pub cutoff: f64,
}

/// Sample sizes for `m̄ = 10, 21, 27, 44, 51`, by design.
pub const STUDY_SIZES: [(u8, [usize; 5]); 4] = [
    (1, [40, 101, 140, 256, 354]),
    (2, [56, 140, 194, 354, 490]),
    (3, [140, 354, 494, 905, 1254]),
    (4, [40, 101, 140, 256, 354]),
];

impl DgpSpec {
    pub fn paper(id: u8) -> Result<Self> {
        let (a, b) = match id {
            1 | 4 => (1.0, 1.0),
            2 => (2.0, 4.0),
            3 => (14.0, 7.0),
            _ => return Err(RdError::Domain(format!("unknown DGP id {id}"))),
        };
        Ok(DgpSpec {
            id,
            beta_a: a,
            beta_b: b,
            tau_true: TAU_TRUE,
            noise_sd: NOISE_SD,
            cutoff: 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.id) {
            return Err(RdError::Domain(format!("unknown DGP id {}", self.id)));
        }
        if !(self.beta_a > 0.0 && self.beta_b > 0.0) {
            return Err(RdError::Domain("Beta shape parameters must be positive".into()));
        }
        if !(self.noise_sd >= 0.0) || !self.cutoff.is_finite() || !self.tau_true.is_finite() {
            return Err(RdError::Domain("invalid noise sd, cutoff or jump".into()));
        }
        Ok(())
    }

    pub fn mean(&self, x: f64) -> f64 {
        let base = smooth_part(self.id, x);
        base + if x >= self.cutoff { self.tau_true } else { 0.0 }
    }
}

fn plus_sq(x: f64) -> f64 {
    let p = x.max(0.0);
    p * p
}

fn smooth_part(id: u8, x: f64) -> f64 {
    match id {
        1 => (x + 1.0).powi(2) - 2.0 * plus_sq(x + 0.2) + 2.0 * plus_sq(x - 0.2) - 2.0 * plus_sq(x - 0.4)
            + 2.0 * plus_sq(x - 0.7)
            - 0.92,
        2 => 0.42 + 0.84 * x - 3.0 * x.powi(2) + 7.99 * x.powi(3) - 9.01 * x.powi(4) + 3.56 * x.powi(5),
        3 => {
            if x < 0.0 {
                0.05 + 1.5 * x + 3.2 * x * x + 2.7 * x.powi(3)
            } else {
                0.05 - 0.15 * x + 2.5 * x * x - 1.5 * x.powi(3)
            }
        }
        4 => 0.0,
        _ => f64::NAN,
    }
}

/// `μ(x)` for design `dgp_id`, including the 0.1 jump at 0.
pub fn dgp_mean(dgp_id: u8, x: f64) -> Result<f64> {
    Ok(DgpSpec::paper(dgp_id)?.mean(x))
}

/// `n` draws. Each observation consumes two uniforms from the seeded stream:
/// first for `Z`, then for `ε`.
pub fn dgp_sample(dgp: &DgpSpec, n: usize, seed: u64) -> Result<RdDataset> {
    dgp.validate()?;
    let mut rng = CounterRng::new(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = 2.0 * rng.beta(dgp.beta_a, dgp.beta_b) - 1.0;
        let eps = rng.normal(0.0, dgp.noise_sd);
        x.push(xi);
        y.push(dgp.mean(xi) + eps);
    }
    RdDataset::new(x, y, dgp.cutoff)
}

/// Smallest `n` with `expected_m(dgp, n) ≥ target`.
pub fn solve_n_for_mbar(dgp: &DgpSpec, m_bar_target: f64) -> Result<usize> {
    if !(m_bar_target > 0.0 && m_bar_target.is_finite()) {
        return Err(RdError::Domain(format!("m̄ target must be positive, got {m_bar_target}")));
    }
    let mut hi = 2usize;
    while expected_m(dgp, hi)? < m_bar_target {
        hi *= 2;
        if hi > 1 << 40 {
            return Err(RdError::Numerical("m̄ target unreachable".into()));
        }
    }
    let mut lo = hi / 2;
    if lo < 2 {
        return Ok(2);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if expected_m(dgp, mid)? >= m_bar_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
